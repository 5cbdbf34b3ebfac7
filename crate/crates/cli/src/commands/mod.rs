pub mod audit;
pub mod bracket;
pub mod classify;
pub mod evolve;

/// Rendered report and the exit code it implies.
pub struct Outcome {
    pub text: String,
    pub code: i32,
}
