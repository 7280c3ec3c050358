pub mod dgp;
pub mod donors;
pub mod estimators;
pub mod factors;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod panel;
pub mod scenario;
pub mod weights;
