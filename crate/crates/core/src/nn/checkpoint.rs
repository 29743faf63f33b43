//! Versioned JSON checkpoint: architecture, topology, parameters and optimizer state.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{LocalToGlobalNet, NetConfig};
use super::optim::Adam;
use super::params::NamedArray;
use crate::error::{Error, Result};
use crate::topology::{HandTopology, TopologyFile};

pub const CHECKPOINT_FORMAT: &str = "lghand-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub net: NetConfig,
    pub topology: TopologyFile,
    pub epochs_completed: usize,
    pub params: Vec<NamedArray>,
    #[serde(default)]
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn capture(net: &LocalToGlobalNet, epochs_completed: usize, optimizer: Option<&Adam>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            net: net.config().clone(),
            topology: net.topology().to_file(),
            epochs_completed,
            params: net.params().to_named(),
            optimizer: optimizer.cloned(),
        }
    }

    /// Rebuilds the network, rejecting any mismatch between config and arrays.
    pub fn restore(&self) -> Result<LocalToGlobalNet> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let topo = HandTopology::from_file(self.topology.clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut net = LocalToGlobalNet::new(self.net.clone(), topo, 0)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        net.params_mut().load_named(&self.params)?;
        if let Some(opt) = &self.optimizer {
            opt.check_compatible(net.params())?;
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LocalToGlobalNet {
        let cfg = NetConfig {
            widths: [3, 4, 5],
            embed: 2,
            ..NetConfig::default()
        };
        LocalToGlobalNet::new(cfg, HandTopology::canonical(), 11).unwrap()
    }

    #[test]
    fn save_load_is_exact() {
        let net = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        Checkpoint::capture(&net, 7, None).save(&path).unwrap();
        let ckpt = Checkpoint::load(&path).unwrap();
        assert_eq!(ckpt.epochs_completed, 7);
        let restored = ckpt.restore().unwrap();
        assert_eq!(restored.params(), net.params());
    }

    #[test]
    fn architecture_mismatch_is_reported() {
        let net = small();
        let mut ckpt = Checkpoint::capture(&net, 0, None);
        ckpt.net.widths = [3, 4, 6];
        assert!(matches!(ckpt.restore(), Err(Error::Checkpoint(_))));
        let mut ckpt = Checkpoint::capture(&net, 0, None);
        ckpt.version = 99;
        assert!(matches!(ckpt.restore(), Err(Error::Checkpoint(_))));
    }
}
