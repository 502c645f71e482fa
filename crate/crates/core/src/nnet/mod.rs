//! Numerical building blocks: seeded RNG, parameter storage, dense and
//! recurrent layers with hand-written backward passes, and a finite-difference
//! gradient checker.

mod gradcheck;
mod linear;
mod lstm;
mod params;
mod rng;
mod tensor;

pub use gradcheck::{finite_diff_check, Coords, GradCheckReport};
pub use linear::Linear;
pub use lstm::{bilstm_forward, lstm_step, BiLstm, BiLstmCache, LstmCell, LstmState, StepCache};
pub use params::{GradBuffer, Init, InitKind, Param, ParamId, ParamStore};
pub use rng::Rng;
pub use tensor::{log_sigmoid, logsumexp, softmax, SequenceTensor};
pub(crate) use tensor::{argmax, log_softmax_in_place, lse2, sigmoid};
