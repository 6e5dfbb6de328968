use std::collections::HashMap;
use std::io::{Cursor, Read};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::{AutodiffError, Element, Tensor};

/// Magic bytes opening a serialized [`ParamSet`].
pub const PARAMS_MAGIC: &[u8; 4] = b"BPRM";
pub const PARAMS_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Vec<T>,
    pub(crate) m: Vec<T>,
    pub(crate) v: Vec<T>,
}

impl<T: Element> Param<T> {
    pub fn first_moment(&self) -> &[T] {
        &self.m
    }

    pub fn second_moment(&self) -> &[T] {
        &self.v
    }
}

/// Named trainable tensors, their gradients and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, usize>,
    pub(crate) step: u64,
}

impl<T: Element> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new(), by_name: HashMap::new(), step: 0 }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> Result<ParamId, AutodiffError> {
        if self.by_name.contains_key(name) {
            return Err(AutodiffError::DuplicateParam(name.to_string()));
        }
        let n = value.len();
        self.by_name.insert(name.to_string(), self.params.len());
        self.params.push(Param { name: name.to_string(), value, grad: vec![T::zero(); n], m: vec![T::zero(); n], v: vec![T::zero(); n] });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Number of optimizer steps taken.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub(crate) fn accumulate(&mut self, index: usize, grad: &[T]) {
        let p = &mut self.params[index];
        p.grad.iter_mut().zip(grad).for_each(|(g, &d)| *g = *g + d);
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().flat_map(|p| &p.grad).map(|g| g.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn grads_finite(&self) -> bool {
        self.params.iter().flat_map(|p| &p.grad).all(|g| g.is_finite())
    }

    /// Rescales all gradients so their global norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm {
            let c = T::from_f64(max_norm / (norm + 1e-12));
            for p in &mut self.params {
                p.grad.iter_mut().for_each(|g| *g = *g * c);
            }
        }
        norm
    }

    /// Copies values (not moments) from another set with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamSet<T>) -> Result<(), AutodiffError> {
        self.check_layout(other)?;
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            p.value = q.value.clone();
        }
        Ok(())
    }

    fn check_layout<U: Element>(&self, other: &ParamSet<U>) -> Result<(), AutodiffError> {
        let same = self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(p, q)| p.name == q.name && p.value.shape() == q.value.shape());
        if same {
            Ok(())
        } else {
            Err(AutodiffError::Format("parameter layouts differ".into()))
        }
    }

    /// Converts values, gradients and moments to another element type.
    pub fn cast<U: Element>(&self) -> ParamSet<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect::<Vec<U>>();
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param { name: p.name.clone(), value: p.value.cast(), grad: conv(&p.grad), m: conv(&p.m), v: conv(&p.v) })
                .collect(),
            by_name: self.by_name.clone(),
            step: self.step,
        }
    }

    /// Versioned little-endian layout:
    ///
    /// ```text
    /// magic "BPRM" | u16 version | u8 dtype bytes (4 or 8) | u8 reserved
    /// u64 optimizer step | u32 count
    /// per parameter: u32 name length, utf-8 name, u32 rank, u64 dims...,
    ///                values, first moments, second moments (dtype each)
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PARAMS_MAGIC);
        out.write_u16::<LE>(PARAMS_VERSION).unwrap();
        out.write_u8(T::DTYPE).unwrap();
        out.write_u8(0).unwrap();
        out.write_u64::<LE>(self.step).unwrap();
        out.write_u32::<LE>(self.params.len() as u32).unwrap();
        for p in &self.params {
            out.write_u32::<LE>(p.name.len() as u32).unwrap();
            out.extend_from_slice(p.name.as_bytes());
            out.write_u32::<LE>(p.value.shape().len() as u32).unwrap();
            for &d in p.value.shape() {
                out.write_u64::<LE>(d as u64).unwrap();
            }
            for block in [p.value.data(), &p.m, &p.v] {
                for &x in block {
                    if T::DTYPE == 4 {
                        out.write_f32::<LE>(x.to_f32().unwrap()).unwrap();
                    } else {
                        out.write_f64::<LE>(x.as_f64()).unwrap();
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AutodiffError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PARAMS_MAGIC {
            return Err(AutodiffError::Format("not a parameter file (bad magic)".into()));
        }
        let version = r.read_u16::<LE>()?;
        if version != PARAMS_VERSION {
            return Err(AutodiffError::Format(format!("unsupported parameter file version {version}")));
        }
        let dtype = r.read_u8()?;
        if dtype != T::DTYPE {
            return Err(AutodiffError::Format(format!("file stores {dtype}-byte floats, expected {}", T::DTYPE)));
        }
        r.read_u8()?;
        let step = r.read_u64::<LE>()?;
        let count = r.read_u32::<LE>()? as usize;
        let mut set = Self::new();
        set.step = step;
        for _ in 0..count {
            let name_len = r.read_u32::<LE>()? as usize;
            if name_len > bytes.len() {
                return Err(AutodiffError::Format("parameter name length exceeds file".into()));
            }
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| AutodiffError::Format("parameter name is not utf-8".into()))?;
            let rank = r.read_u32::<LE>()? as usize;
            if rank > 8 {
                return Err(AutodiffError::Format(format!("parameter {name:?} has rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.read_u64::<LE>().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            if n.saturating_mul(dtype as usize) > bytes.len() {
                return Err(AutodiffError::Format(format!("parameter {name:?} larger than file")));
            }
            let mut read_block = || -> Result<Vec<T>, AutodiffError> {
                (0..n)
                    .map(|_| {
                        Ok(if dtype == 4 { T::from_f64(r.read_f32::<LE>()? as f64) } else { T::from_f64(r.read_f64::<LE>()?) })
                    })
                    .collect()
            };
            let value = read_block()?;
            let m = read_block()?;
            let v = read_block()?;
            let id = set.add(&name, Tensor::new(&shape, value)?)?;
            let p = set.param_mut(id);
            p.m = m;
            p.v = v;
        }
        if (r.position() as usize) != bytes.len() {
            return Err(AutodiffError::Format("trailing bytes after parameters".into()));
        }
        Ok(set)
    }
}
