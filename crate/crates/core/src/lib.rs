//! Tabular policy distillation on small MDPs: environments, teachers, the
//! family of distillation update rules, and exact expected-update checks.

pub mod episode;
pub mod mdp;
pub mod tabular;
pub mod teacher;
pub mod distill;
pub mod verify;
