pub mod autograd;
pub mod cli;
pub mod gradcheck;
pub mod model;
pub mod tensor;
pub mod vocab;
pub mod objectives;
pub mod corpus;
pub mod trainkit;
pub mod weightops;
pub mod evalkit;
pub mod experiments;
