use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use texgan_tensor::{Graph, Real, Tensor, Var};

use super::spec::NetworkSpec;
use crate::error::{CoreError, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// `U(−a, a)` with `a = √(6 / fan_in)` (variance `2 / fan_in`); biases and
    /// layers flagged `zero_init` start at zero.
    #[default]
    UniformFanIn,
    Zeros,
}

impl InitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::UniformFanIn => "uniform-fan-in",
            Self::Zeros => "zeros",
        }
    }
}

impl FromStr for InitScheme {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-fan-in" => Ok(Self::UniformFanIn),
            "zeros" => Ok(Self::Zeros),
            other => Err(CoreError::UnknownScheme(other.to_string())),
        }
    }
}

/// Named parameter tensors in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Real> {
    slots: Vec<(String, Tensor<T>)>,
    pub seed: u64,
    pub scheme: InitScheme,
}

/// Parameter slots registered on a graph.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
    order: Vec<Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::UnknownSlot(name.to_string()))
    }

    /// Vars in slot order.
    pub fn vars(&self) -> &[Var] {
        &self.order
    }
}

pub fn init_params<T: Real>(spec: &NetworkSpec, seed: u64, scheme: InitScheme) -> ParamStore<T> {
    let slots = spec
        .slots()
        .into_iter()
        .map(|slot| {
            let len: usize = slot.shape.iter().product();
            let data = if scheme == InitScheme::Zeros || slot.zero_init {
                vec![T::zero(); len]
            } else {
                let bound = (6.0 / slot.fan_in as f64).sqrt();
                let mut rng = seed::rng(seed, &slot.name, 0);
                (0..len).map(|_| T::of(rng.random_range(-bound..bound))).collect()
            };
            let tensor = Tensor::new(slot.shape, data).expect("slot length matches shape");
            (slot.name, tensor)
        })
        .collect();
    ParamStore { slots, seed, scheme }
}

const MANIFEST_MAGIC: &str = "texgan-params v1";

impl<T: Real> ParamStore<T> {
    pub fn from_slots(slots: Vec<(String, Tensor<T>)>, seed: u64, scheme: InitScheme) -> Self {
        Self { slots, seed, scheme }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.slots.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.slots
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| CoreError::UnknownSlot(name.to_string()))
    }

    /// Replaces a slot's value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self
            .slots
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| CoreError::UnknownSlot(name.to_string()))?;
        if slot.1.shape() != value.shape() {
            return Err(CoreError::Shape {
                layer: name.to_string(),
                detail: format!("cannot replace {:?} with {:?}", slot.1.shape(), value.shape()),
            });
        }
        slot.1 = value;
        Ok(())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.slots.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.slots.iter_mut().map(|(_, t)| t)
    }

    pub fn value_count(&self) -> usize {
        self.slots.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            slots: self.slots.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
            seed: self.seed,
            scheme: self.scheme,
        }
    }

    /// Same names and shapes, all zeros (e.g. optimizer moments).
    pub fn zeros_like(&self) -> Self {
        Self {
            slots: self
                .slots
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
            seed: self.seed,
            scheme: InitScheme::Zeros,
        }
    }

    /// Registers every slot on `graph`: as gradient-carrying variables when
    /// `trainable`, otherwise as constants.
    pub fn bind(&self, graph: &Graph<T>, trainable: bool) -> BoundParams {
        let mut vars = BTreeMap::new();
        let mut order = Vec::with_capacity(self.slots.len());
        for (name, t) in &self.slots {
            let v = if trainable {
                graph.variable(name, t.clone())
            } else {
                graph.constant(t.clone())
            };
            vars.insert(name.clone(), v);
            order.push(v);
        }
        BoundParams { vars, order }
    }

    /// Writes `<stem>.bin` (little-endian `f32`, slots concatenated) and
    /// `<stem>.manifest` (header lines, then `name<TAB>shape<TAB>byte offset`).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let (bin, manifest) = file_pair(stem);
        let mut text = format!("{MANIFEST_MAGIC}\nseed\t{}\nscheme\t{}\n", self.seed, self.scheme.as_str());
        let mut bytes = Vec::with_capacity(self.value_count() * 4);
        for (name, t) in &self.slots {
            let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            writeln!(text, "{name}\t{}\t{}", shape.join(","), bytes.len()).unwrap();
            for &v in t.data() {
                bytes.extend((v.as_f64() as f32).to_le_bytes());
            }
        }
        if let Some(dir) = stem.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
            }
        }
        fs::write(&bin, &bytes).map_err(|e| CoreError::io(&bin, e))?;
        fs::write(&manifest, text).map_err(|e| CoreError::io(&manifest, e))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let (bin, manifest) = file_pair(stem);
        let text = fs::read_to_string(&manifest).map_err(|e| CoreError::io(&manifest, e))?;
        let bytes = fs::read(&bin).map_err(|e| CoreError::io(&bin, e))?;
        let bad = |detail: String| CoreError::format(&manifest, detail);
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_MAGIC) {
            return Err(bad(format!("missing `{MANIFEST_MAGIC}` header")));
        }
        let mut header = |key: &str| -> Result<String> {
            match lines.next().and_then(|l| l.split_once('\t')) {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ => Err(bad(format!("expected `{key}` line"))),
            }
        };
        let seed = header("seed")?.parse().map_err(|_| bad("bad seed".into()))?;
        let scheme = header("scheme")?.parse()?;
        let mut slots = Vec::new();
        let mut expected_offset = 0usize;
        for line in lines.filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            let [name, shape, offset] = fields[..] else {
                return Err(bad(format!("malformed slot line `{line}`")));
            };
            let shape: Vec<usize> = if shape.is_empty() {
                Vec::new()
            } else {
                shape
                    .split(',')
                    .map(|d| d.parse().map_err(|_| bad(format!("bad shape in `{line}`"))))
                    .collect::<Result<_>>()?
            };
            let offset: usize = offset.parse().map_err(|_| bad(format!("bad offset in `{line}`")))?;
            let len: usize = shape.iter().product();
            if offset != expected_offset || offset + 4 * len > bytes.len() {
                return Err(bad(format!("slot `{name}` offset {offset} inconsistent with payload")));
            }
            let data = bytes[offset..offset + 4 * len]
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            slots.push((name.to_string(), Tensor::new(shape, data)?));
            expected_offset = offset + 4 * len;
        }
        if expected_offset != bytes.len() {
            return Err(bad(format!("payload has {} bytes, manifest covers {expected_offset}", bytes.len())));
        }
        Ok(Self { slots, seed, scheme })
    }

    /// Checks names and shapes against `spec`.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let want = spec.slots();
        if want.len() != self.slots.len() {
            return Err(CoreError::Config(format!(
                "{} expects {} parameter slots, store has {}",
                spec.name,
                want.len(),
                self.slots.len()
            )));
        }
        for (w, (name, t)) in want.iter().zip(&self.slots) {
            if &w.name != name || w.shape != t.shape() {
                return Err(CoreError::Config(format!(
                    "slot `{name}` {:?} does not match `{}` {:?}",
                    t.shape(),
                    w.name,
                    w.shape
                )));
            }
        }
        Ok(())
    }
}

fn file_pair(stem: &Path) -> (PathBuf, PathBuf) {
    let with = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".bin"), with(".manifest"))
}
