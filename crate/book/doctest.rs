//! Compiles every chapter of the guide so its code blocks run under
//! `cargo test --doc`.

macro_rules! chapters {
    ($($name:ident => $path:literal),* $(,)?) => {
        $(
            #[doc = include_str!($path)]
            pub mod $name {}
        )*
    };
}

chapters! {
    introduction => "src/introduction.md",
    model => "src/model.md",
    kernels => "src/kernels.md",
    flow => "src/flow.md",
    simulation => "src/simulation.md",
    solver => "src/solver.md",
    analysis => "src/analysis.md",
    cli => "src/cli.md",
}
