//! Checkpoint file: `NPCK` magic, architecture, tensor directory, metadata, weights, CRC32.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "NPCK" | version u16 | architecture u8 | activation u8
//! width u32 | depth u32 | modes u32 | n_x u32
//! objective u8 | equation u8 | has coefficient range u8
//! dt f64 | time scale f64 | coefficient lo f64 | coefficient hi f64
//! u_mean f64 | u_std f64 | y_mean f64 | y_std f64
//! tensor count u32, then per tensor: name (u32 len + UTF-8) | rank u32 | dims [rank] u32 | offset u64
//! training config echo (u32 len + UTF-8)
//! log digest: epochs u64 | final train loss f64 | final val loss f64 | best val loss f64
//!             | best epoch u64 | wall seconds f64
//! weights [total] f64, each tensor starting at its directory offset (in values)
//! crc32 u32 over every preceding byte
//! ```
//!
//! The architecture tag is checked before anything else is interpreted, so a file from an
//! unknown architecture fails closed even if its checksum is intact.

use std::path::Path;

use super::atomic::write_atomic;
use super::binary::{put_f64s, put_string, ByteReader};
use super::run_config::{parse_train_config, render_train_config};
use crate::error::{Error, Result};
use crate::pde_data::Equation;
use crate::surrogate::{Activation, ArchConfig, Architecture, ConditioningPolicy, Model, ModelParams, Tensor};
use crate::training::{EpochLog, NormStats, Objective, Surrogate, SurrogateMeta, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NPCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Summary of a training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDigest {
    pub epochs: u64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub best_val_loss: f64,
    pub best_epoch: u64,
    pub wall_seconds: f64,
}

impl LogDigest {
    pub fn from_log(log: &[EpochLog]) -> Self {
        let last = log.last();
        let best = log
            .iter()
            .filter(|e| !e.val_loss.is_nan())
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss));
        Self {
            epochs: log.len() as u64,
            final_train_loss: last.map_or(f64::NAN, |e| e.train_loss),
            final_val_loss: last.map_or(f64::NAN, |e| e.val_loss),
            best_val_loss: best.map_or(f64::NAN, |e| e.val_loss),
            best_epoch: best.map_or(0, |e| e.epoch as u64),
            wall_seconds: last.map_or(0.0, |e| e.wall_seconds),
        }
    }

    /// Field-wise equality that treats identical NaN bit patterns as equal.
    pub fn bit_eq(&self, other: &Self) -> bool {
        let a = [self.final_train_loss, self.final_val_loss, self.best_val_loss, self.wall_seconds];
        let b = [other.final_train_loss, other.final_val_loss, other.best_val_loss, other.wall_seconds];
        self.epochs == other.epochs
            && self.best_epoch == other.best_epoch
            && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits())
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub surrogate: Surrogate<f64>,
    pub train_config: TrainConfig,
    pub log: LogDigest,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let params = ck.surrogate.model.params();
    let cfg = params.config();
    let meta = &ck.surrogate.meta;
    let mut out = Vec::with_capacity(256 + params.param_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(cfg.architecture.tag());
    out.push(cfg.activation.tag());
    for v in [cfg.width, cfg.depth, cfg.modes, cfg.n_x] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(meta.objective.tag());
    out.push(meta.equation.tag());
    let (lo, hi) = meta.policy.coefficient_range.unwrap_or((0.0, 0.0));
    out.push(meta.policy.coefficient_range.is_some() as u8);
    let n = &meta.norm;
    put_f64s(
        &mut out,
        &[meta.dt, meta.policy.time_scale, lo, hi, n.u_mean, n.u_std, n.y_mean, n.y_std],
    );
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for t in params.tensors() {
        put_string(&mut out, &t.name);
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.data.len() as u64;
    }
    put_string(&mut out, &render_train_config(&ck.train_config));
    let l = &ck.log;
    out.extend_from_slice(&l.epochs.to_le_bytes());
    put_f64s(&mut out, &[l.final_train_loss, l.final_val_loss, l.best_val_loss]);
    out.extend_from_slice(&l.best_epoch.to_le_bytes());
    put_f64s(&mut out, &[l.wall_seconds]);
    for t in params.tensors() {
        put_f64s(&mut out, &t.data);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes, "checkpoint file");
    if &r.array::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: "NPCK" });
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnknownVersion(version));
    }
    let arch_tag = r.u8()?;
    let architecture = Architecture::from_tag(arch_tag).ok_or(Error::UnknownArchitecture(arch_tag))?;
    if bytes.len() < r.position() + 4 {
        return Err(Error::Truncated("checkpoint file ends before its checksum".into()));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = ByteReader::new(body, "checkpoint file");
    r.take(7)?;
    let act_tag = r.u8()?;
    let activation = Activation::from_tag(act_tag).ok_or_else(|| bad(format!("unknown activation tag {act_tag}")))?;
    let config = ArchConfig {
        architecture,
        activation,
        width: r.u32()? as usize,
        depth: r.u32()? as usize,
        modes: r.u32()? as usize,
        n_x: r.u32()? as usize,
    };
    config.validate()?;
    let obj_tag = r.u8()?;
    let objective = Objective::from_tag(obj_tag).ok_or_else(|| bad(format!("unknown objective tag {obj_tag}")))?;
    let eq_tag = r.u8()?;
    let equation = Equation::from_tag(eq_tag).ok_or_else(|| bad(format!("unknown equation tag {eq_tag}")))?;
    let has_range = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(bad(format!("invalid coefficient-range flag {v}"))),
    };
    let [dt, time_scale, lo, hi, u_mean, u_std, y_mean, y_std]: [f64; 8] =
        r.f64_vec(8)?.try_into().expect("eight values");
    let meta = SurrogateMeta {
        objective,
        norm: NormStats {
            u_mean,
            u_std,
            y_mean,
            y_std,
        },
        policy: ConditioningPolicy {
            time_scale,
            coefficient_range: has_range.then_some((lo, hi)),
        },
        dt,
        equation,
    };

    let layout = config.layout();
    let count = r.u32()? as usize;
    if count != layout.len() {
        return Err(bad(format!(
            "checkpoint lists {count} tensors, the architecture has {}",
            layout.len()
        )));
    }
    let mut directory = Vec::with_capacity(count);
    let mut expected_offset = 0u64;
    for (name, shape) in &layout {
        let stored_name = r.string()?;
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(bad(format!("tensor `{stored_name}` has rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let offset = r.u64()?;
        if &stored_name != name || &dims != shape || offset != expected_offset {
            return Err(bad(format!(
                "tensor directory entry `{stored_name}` {dims:?} @ {offset} does not match `{name}` {shape:?} @ {expected_offset}"
            )));
        }
        expected_offset += dims.iter().product::<usize>() as u64;
        directory.push((stored_name, dims));
    }
    let train_config = parse_train_config(&r.string()?)?;
    let epochs = r.u64()?;
    let [final_train_loss, final_val_loss, best_val_loss]: [f64; 3] = r.f64_vec(3)?.try_into().expect("three values");
    let best_epoch = r.u64()?;
    let wall_seconds = r.f64()?;
    let log = LogDigest {
        epochs,
        final_train_loss,
        final_val_loss,
        best_val_loss,
        best_epoch,
        wall_seconds,
    };
    let mut tensors = Vec::with_capacity(count);
    for (name, shape) in directory {
        let data = r.f64_vec(shape.iter().product())?;
        tensors.push(Tensor { name, shape, data });
    }
    if r.position() != body.len() {
        return Err(bad(format!(
            "checkpoint has {} unexpected trailing bytes",
            body.len() - r.position()
        )));
    }
    let params = ModelParams::from_tensors(config, tensors)?;
    Ok(Checkpoint {
        surrogate: Surrogate::new(Model::new(params), meta),
        train_config,
        log,
    })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::Pushforward;
    use crate::integrators::IntegratorKind;

    fn sample(arch: ArchConfig) -> Checkpoint {
        let model = Model::init(arch, 5).unwrap();
        Checkpoint {
            surrogate: Surrogate::new(
                model,
                SurrogateMeta {
                    objective: Objective::Derivative,
                    norm: NormStats {
                        u_mean: 0.01,
                        u_std: 0.4,
                        y_mean: -0.002,
                        y_std: 0.7,
                    },
                    policy: ConditioningPolicy {
                        time_scale: 2.0,
                        coefficient_range: Some((0.1, 2.5)),
                    },
                    dt: 0.016,
                    equation: Equation::Advection,
                },
            ),
            train_config: TrainConfig {
                pushforward: Pushforward::On {
                    warmup_epochs: 2,
                    integrator: IntegratorKind::Rk4,
                },
                seed: 3,
                ..TrainConfig::default()
            },
            log: LogDigest {
                epochs: 10,
                final_train_loss: 0.01,
                final_val_loss: 0.02,
                best_val_loss: 0.015,
                best_epoch: 8,
                wall_seconds: 1.5,
            },
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        for arch in [ArchConfig::spectral(16), ArchConfig::conv(16)] {
            let arch = ArchConfig { width: 8, depth: 2, modes: arch.modes.min(5), ..arch };
            let ck = sample(arch);
            let bytes = encode_checkpoint(&ck);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back.surrogate.model.params(), ck.surrogate.model.params());
            assert_eq!(back.surrogate.meta, ck.surrogate.meta);
            assert_eq!(back.train_config, ck.train_config);
            assert!(back.log.bit_eq(&ck.log));
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn unknown_architecture_fails_closed() {
        let arch = ArchConfig { width: 4, depth: 1, modes: 2, ..ArchConfig::spectral(8) };
        let mut bytes = encode_checkpoint(&sample(arch));
        bytes[6] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::UnknownArchitecture(9))));
    }

    #[test]
    fn corruption_and_truncation_are_detected() {
        let arch = ArchConfig { width: 4, depth: 1, modes: 2, ..ArchConfig::spectral(8) };
        let bytes = encode_checkpoint(&sample(arch));
        for pos in [8, 40, bytes.len() / 2, bytes.len() - 5, bytes.len() - 1] {
            let mut b = bytes.clone();
            b[pos] ^= 0x10;
            assert!(matches!(decode_checkpoint(&b), Err(Error::Checksum { .. })), "byte {pos}");
        }
        assert!(decode_checkpoint(&bytes[..5]).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(decode_checkpoint(&b), Err(Error::BadMagic { .. })));
        let mut b = bytes;
        b[4] = 7;
        assert!(matches!(decode_checkpoint(&b), Err(Error::UnknownVersion(7))));
    }
}
