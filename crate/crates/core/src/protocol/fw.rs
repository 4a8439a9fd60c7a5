//! DFT gossip on full whiteboards: every agent traverses on its own and
//! drops what it knows at every node it passes, so nobody has to wait.

use super::dft::{dft_step, Mode};
use super::{Event, Intent, ProtocolError};
use crate::model::{BoardClass, Configuration, Program};

/// One action of an `fw_async_dft` agent. The minimum-id fields of the
/// board are never read or written.
pub fn fw_dft_step(cfg: &mut Configuration, i: usize, events: &mut Vec<Event>) -> Result<Intent, ProtocolError> {
    if cfg.boards[cfg.agents[i].position].class() != BoardClass::FW {
        return Err(ProtocolError::Unsupported {
            program: Program::FwAsyncDft,
            reason: "needs FW whiteboards".into(),
        });
    }
    dft_step(cfg, i, Mode::NoWait, events)
}
