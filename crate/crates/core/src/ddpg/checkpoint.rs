//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "BALCKPT\0"
//! version  u32 LE
//! hlen     u64 LE   length of the JSON header
//! header   hlen bytes of UTF-8 JSON
//! tensors  f64 LE, concatenated in header order, each row-major
//! crc32    u32 LE   over every preceding byte
//! ```
//!
//! Files are written to a sibling temporary path and renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agent::{Ddpg, Hyperparams};
use super::networks::{Actor, Critic};
use super::nn::Dense;
use crate::error::CheckpointError;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BALCKPT\0";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub agent: Ddpg,
    pub seed: u64,
    /// Episodes completed when the snapshot was taken.
    pub episode: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    hyperparams: Hyperparams,
    seed: u64,
    episode: usize,
    obs_dim: usize,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
    tensors: Vec<TensorInfo>,
}

const NETS: [&str; 4] = ["actor", "critic", "target_actor", "target_critic"];

fn net_layers(agent: &Ddpg) -> [[&Dense; 3]; 4] {
    [
        [&agent.actor.l1, &agent.actor.l2, &agent.actor.l3],
        [&agent.critic.l1, &agent.critic.l2, &agent.critic.l3],
        [&agent.target_actor.l1, &agent.target_actor.l2, &agent.target_actor.l3],
        [
            &agent.target_critic.l1,
            &agent.target_critic.l2,
            &agent.target_critic.l3,
        ],
    ]
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let agent = &ckpt.agent;
    let mut tensors = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    for (net, layers) in NETS.iter().zip(net_layers(agent)) {
        for (i, l) in layers.iter().enumerate() {
            tensors.push(TensorInfo {
                name: format!("{net}.l{}.weight", i + 1),
                rows: l.n_out,
                cols: l.n_in,
            });
            data.extend(&l.weight);
            tensors.push(TensorInfo {
                name: format!("{net}.l{}.bias", i + 1),
                rows: l.n_out,
                cols: 1,
            });
            data.extend(&l.bias);
        }
    }
    let header = Header {
        hyperparams: agent.hp.clone(),
        seed: ckpt.seed,
        episode: ckpt.episode,
        obs_dim: agent.actor.obs_dim(),
        action_low: agent.action_low.clone(),
        action_high: agent.action_high.clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(24 + json.len() + 8 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(corrupt("checksum mismatch"));
    }
    let hlen = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
    let json = body
        .get(20..20usize.saturating_add(hlen))
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| corrupt(format!("header: {e}")))?;
    let payload = &body[20 + hlen..];
    if payload.len() % 8 != 0 {
        return Err(corrupt("tensor payload is not a whole number of f64"));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
    if expected != payload.len() / 8 || header.tensors.len() != 24 {
        return Err(corrupt("tensor table does not match payload"));
    }
    let mut infos = header.tensors.iter();
    let mut take_layer = |net: &str, idx: usize| -> Result<Dense, CheckpointError> {
        let w = infos.next().unwrap();
        let b = infos.next().unwrap();
        if w.name != format!("{net}.l{idx}.weight") || b.name != format!("{net}.l{idx}.bias") || b.rows != w.rows {
            return Err(corrupt(format!("unexpected tensor {}", w.name)));
        }
        let weight: Vec<f64> = values.by_ref().take(w.rows * w.cols).collect();
        let bias: Vec<f64> = values.by_ref().take(b.rows).collect();
        if weight.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(corrupt(format!("non-finite values in {}", w.name)));
        }
        Ok(Dense {
            n_in: w.cols,
            n_out: w.rows,
            weight,
            bias,
        })
    };
    let mut actors = Vec::new();
    let mut critics = Vec::new();
    for net in NETS {
        let layers = [take_layer(net, 1)?, take_layer(net, 2)?, take_layer(net, 3)?];
        let [l1, l2, l3] = layers;
        if net.ends_with("actor") {
            actors.push(Actor { l1, l2, l3 });
        } else {
            critics.push(Critic { l1, l2, l3 });
        }
    }
    let target_critic = critics.pop().unwrap();
    let critic = critics.pop().unwrap();
    let target_actor = actors.pop().unwrap();
    let actor = actors.pop().unwrap();
    let act_dim = header.action_low.len();
    let shapes_ok = actor.obs_dim() == header.obs_dim
        && actor.act_dim() == act_dim
        && header.action_high.len() == act_dim
        && actor.l2.n_in == actor.l1.n_out
        && actor.l3.n_in == actor.l2.n_out
        && critic.l1.n_in == header.obs_dim
        && critic.l2.n_in == critic.l1.n_out + act_dim
        && critic.l3.n_in == critic.l2.n_out
        && critic.l3.n_out == 1
        && target_actor.layers_shape() == actor.layers_shape()
        && target_critic.layers_shape() == critic.layers_shape();
    if !shapes_ok {
        return Err(corrupt("layer shapes are inconsistent"));
    }
    header.hyperparams.validate().map_err(corrupt)?;
    let agent = Ddpg::from_networks(
        actor,
        critic,
        target_actor,
        target_critic,
        header.action_low,
        header.action_high,
        header.hyperparams,
    );
    Ok(Checkpoint {
        agent,
        seed: header.seed,
        episode: header.episode,
    })
}

trait LayerShapes {
    fn layers_shape(&self) -> [(usize, usize); 3];
}

impl LayerShapes for Actor {
    fn layers_shape(&self) -> [(usize, usize); 3] {
        [self.l1.shape(), self.l2.shape(), self.l3.shape()]
    }
}

impl LayerShapes for Critic {
    fn layers_shape(&self) -> [(usize, usize); 3] {
        [self.l1.shape(), self.l2.shape(), self.l3.shape()]
    }
}

impl Dense {
    fn shape(&self) -> (usize, usize) {
        (self.n_out, self.n_in)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let bytes = encode(ckpt);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::nn::Parameters;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let hp = Hyperparams {
            hidden: 8,
            ..Default::default()
        };
        let mut agent = Ddpg::new(6, vec![-1.0, -0.5], vec![1.0, 0.0], hp, &mut rng);
        agent.target_actor.l1.bias[0] = 0.25;
        Checkpoint {
            agent,
            seed: 7,
            episode: 13,
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let c = sample();
        let d = decode(&encode(&c)).unwrap();
        assert_eq!(d.seed, 7);
        assert_eq!(d.episode, 13);
        assert_eq!(d.agent.hp, c.agent.hp);
        assert_eq!(d.agent.actor, c.agent.actor);
        assert_eq!(d.agent.critic, c.agent.critic);
        assert_eq!(d.agent.target_actor, c.agent.target_actor);
        assert_eq!(d.agent.target_critic, c.agent.target_critic);
        assert_eq!(d.agent.action_high, vec![1.0, 0.0]);
        assert_eq!(encode(&d), encode(&c));
    }

    #[test]
    fn weights_are_row_major_f64() {
        let c = sample();
        let bytes = encode(&c);
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let first = f64::from_le_bytes(bytes[20 + hlen..28 + hlen].try_into().unwrap());
        let second = f64::from_le_bytes(bytes[28 + hlen..36 + hlen].try_into().unwrap());
        assert_eq!(first, c.agent.actor.l1.weight[0]);
        assert_eq!(second, c.agent.actor.l1.weight[1]);
        assert_eq!(c.agent.actor.l1.n_in, 6);
    }

    #[test]
    fn detects_corruption() {
        let bytes = encode(&sample());
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 40;
        flipped[mid] ^= 1;
        assert!(matches!(decode(&flipped), Err(CheckpointError::Corrupt(_))));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Corrupt(_))
        ));
        assert!(matches!(
            decode(b"not a checkpoint at all!"),
            Err(CheckpointError::Corrupt(_))
        ));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(decode(&v2), Err(CheckpointError::Version(2))));
    }

    #[test]
    fn file_roundtrip_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        let c = sample();
        save_checkpoint(&c, &path).unwrap();
        save_checkpoint(&c, &path).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("agent.ckpt")]);
        let d = load_checkpoint(&path).unwrap();
        assert_eq!(d.agent.critic.flat(), c.agent.critic.flat());
    }
}
