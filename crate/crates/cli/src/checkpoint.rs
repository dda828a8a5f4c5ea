//! "OLHG" binary checkpoints and the model/optimizer state stored in them.
//!
//! Layout: magic, version (u32 LE), tensor count (u32 LE), then per tensor
//! the name length (u32 LE), the UTF-8 name, the rank (u32 LE), each dim
//! (u64 LE) and the f32 LE payload. Tensors keep insertion order.
//!
//! Real-valued metadata that must survive exactly (standardization
//! statistics, learning rates, schedule endpoints) is stored as the four
//! 16-bit limbs of its f64 bit pattern, each an exactly representable f32.

use std::fs;
use std::path::Path;

use inkline_core::diffusion::{DiffusionConfig, FontModel, TrajStats};
use inkline_core::layout::{BoxStandardizer, LayoutConfig, LayoutModel};
use inkline_core::nn::{Adam, AdamConfig, ParamStore, Tensor};
use inkline_core::style::StyleConfig;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"OLHG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<(String, Tensor)>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.tensors.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.tensors.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| bad(format!("missing tensor {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| bad("tensor name is not UTF-8"))?.to_owned();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(16));
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| bad("dimension overflow"))?);
            }
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("size overflow"))?;
            let payload = r.take(n.checked_mul(4).ok_or_else(|| bad("size overflow"))?)?;
            let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            tensors.push((name, Tensor::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn insert_f64s(&mut self, name: &str, values: &[f64]) {
        let data: Vec<f32> = values.iter().flat_map(|v| split_f64(*v)).collect();
        self.insert(name, Tensor::new(&[values.len(), 4], data).expect("shape"));
    }

    pub fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        let t = self.require(name)?;
        if t.shape().len() != 2 || t.shape()[1] != 4 {
            return Err(bad(format!("{name}: expected [n, 4]")));
        }
        t.data().chunks(4).map(|c| join_f64(c).ok_or_else(|| bad(format!("{name}: bad limb")))).collect()
    }

    pub fn insert_ints(&mut self, name: &str, values: &[usize]) {
        self.insert_f64s(name, &values.iter().map(|&v| v as f64).collect::<Vec<_>>());
    }

    pub fn ints(&self, name: &str) -> Result<Vec<usize>> {
        self.f64s(name)?
            .into_iter()
            .map(|v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as usize) } else { Err(bad(format!("{name}: not an integer"))) })
            .collect()
    }

    /// Every parameter of `store` under its own name.
    pub fn insert_store(&mut self, store: &ParamStore) {
        for p in store.iter() {
            self.insert(p.name.clone(), p.value.clone());
        }
    }

    /// Overwrites every parameter of `store` from this checkpoint.
    pub fn fill_store(&self, store: &mut ParamStore) -> Result<()> {
        let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
        for n in names {
            store.set(&n, self.require(&n)?.clone())?;
        }
        Ok(())
    }

    pub fn insert_adam(&mut self, prefix: &str, adam: &Adam, store: &ParamStore) {
        self.insert_f64s(
            &format!("{prefix}.state"),
            &[adam.step as f64, adam.learning_rate, adam.config.learning_rate, adam.config.decay_per_batch],
        );
        for (p, (m, v)) in store.iter().zip(adam.moments(store)) {
            self.insert(format!("{prefix}.m.{}", p.name), m);
            self.insert(format!("{prefix}.v.{}", p.name), v);
        }
    }

    pub fn has_adam(&self, prefix: &str) -> bool {
        self.get(&format!("{prefix}.state")).is_some()
    }

    pub fn adam(&self, prefix: &str, config: AdamConfig, store: &ParamStore) -> Result<Adam> {
        let state = self.f64s(&format!("{prefix}.state"))?;
        if state.len() != 4 {
            return Err(bad("optimizer state"));
        }
        let mut adam = Adam::new(config, store);
        adam.step = state[0] as u64;
        adam.learning_rate = state[1];
        for (i, p) in store.iter().enumerate() {
            let m = self.require(&format!("{prefix}.m.{}", p.name))?;
            let v = self.require(&format!("{prefix}.v.{}", p.name))?;
            adam.set_moments(i, m, v)?;
        }
        Ok(adam)
    }
}

fn split_f64(v: f64) -> [f32; 4] {
    let b = v.to_bits();
    [0, 16, 32, 48].map(|s| ((b >> s) & 0xffff) as f32)
}

fn join_f64(limbs: &[f32]) -> Option<f64> {
    let mut b = 0u64;
    for (i, &l) in limbs.iter().enumerate() {
        if !(0.0..65536.0).contains(&l) || l.fract() != 0.0 {
            return None;
        }
        b |= (l as u64) << (16 * i);
    }
    Some(f64::from_bits(b))
}

/// Which run scale produced a checkpoint.
pub fn scale_code(scale: &str) -> usize {
    if scale == "paper" {
        1
    } else {
        0
    }
}

fn check_scale(ckpt: &Checkpoint, scale: &str) -> Result<()> {
    let stored = ckpt.ints("meta.scale")?;
    if stored != [scale_code(scale)] {
        let name = if stored == [1] { "paper" } else { "toy" };
        return Err(CliError::ConfigMismatch(format!("checkpoint was trained at {name} scale, config asks for {scale}")));
    }
    Ok(())
}

pub fn layout_to_checkpoint(model: &LayoutModel, adam: Option<&Adam>, scale: &str) -> Checkpoint {
    let mut c = Checkpoint::new();
    c.insert_ints("meta.scale", &[scale_code(scale)]);
    let cfg = model.config;
    c.insert_ints("meta.layout", &[cfg.categories, cfg.embed_dim, cfg.hidden, cfg.layers]);
    c.insert_f64s("meta.layout.standardizer", &model.standardizer.to_array());
    c.insert_store(&model.store);
    if let Some(a) = adam {
        c.insert_adam("adam", a, &model.store);
    }
    c
}

/// Rebuilds a layout model; `scale` is checked when given.
pub fn layout_from_checkpoint(ckpt: &Checkpoint, scale: Option<&str>) -> Result<LayoutModel> {
    if let Some(s) = scale {
        check_scale(ckpt, s)?;
    }
    let m = ckpt.ints("meta.layout")?;
    let [categories, embed_dim, hidden, layers] = m[..] else {
        return Err(bad("meta.layout"));
    };
    let mut model = LayoutModel::new(LayoutConfig { categories, embed_dim, hidden, layers }, 0);
    ckpt.fill_store(&mut model.store)?;
    let s: [f64; 8] = ckpt.f64s("meta.layout.standardizer")?.try_into().map_err(|_| bad("standardizer"))?;
    model.standardizer = BoxStandardizer::from_array(s);
    Ok(model)
}

pub fn font_to_checkpoint(model: &FontModel, adam: Option<&Adam>, scale: &str, fallback: Option<&Tensor>) -> Checkpoint {
    let mut c = Checkpoint::new();
    c.insert_ints("meta.scale", &[scale_code(scale)]);
    let cfg = model.config;
    let mut ints = vec![cfg.categories];
    ints.extend(cfg.style.channels);
    ints.push(cfg.style.proj_dim);
    ints.extend(cfg.unet_channels);
    ints.extend([cfg.steps, cfg.n_max]);
    c.insert_ints("meta.font", &ints);
    c.insert_f64s("meta.font.alphas", &[cfg.alpha_first, cfg.alpha_last]);
    c.insert_f64s("meta.font.traj_stats", &model.stats.to_array());
    c.insert_store(&model.store);
    if let Some(f) = fallback {
        c.insert("meta.font.fallback_reference", f.clone());
    }
    if let Some(a) = adam {
        c.insert_adam("adam", a, &model.store);
    }
    c
}

pub fn font_from_checkpoint(ckpt: &Checkpoint, scale: Option<&str>) -> Result<FontModel> {
    if let Some(s) = scale {
        check_scale(ckpt, s)?;
    }
    let m = ckpt.ints("meta.font")?;
    if m.len() != 12 {
        return Err(bad("meta.font"));
    }
    let a = ckpt.f64s("meta.font.alphas")?;
    if a.len() != 2 {
        return Err(bad("meta.font.alphas"));
    }
    let config = DiffusionConfig {
        categories: m[0],
        style: StyleConfig { channels: [m[1], m[2], m[3], m[4]], proj_dim: m[5] },
        unet_channels: [m[6], m[7], m[8], m[9]],
        steps: m[10],
        n_max: m[11],
        alpha_first: a[0],
        alpha_last: a[1],
    };
    let mut model = FontModel::new(config, 0)?;
    ckpt.fill_store(&mut model.store)?;
    let s: [f64; 6] = ckpt.f64s("meta.font.traj_stats")?.try_into().map_err(|_| bad("traj stats"))?;
    model.stats = TrajStats::from_array(s);
    Ok(model)
}
