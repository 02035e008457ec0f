//! Parameter trees, generic over the leaf type so one structure serves both as
//! owned weights (`Matrix`) and as handles bound to a tape (`Var`).

use std::collections::BTreeMap;

use rand::Rng;

use crate::diffmath::Matrix;
use crate::error::{Error, Result};

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

macro_rules! leaf_struct {
    ($(#[$meta:meta])* $name:ident { $($field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T = Matrix> {
            $(pub $field: T,)*
        }

        impl<T> $name<T> {
            pub fn try_map<U, E>(
                &self,
                prefix: &str,
                f: &mut impl FnMut(&str, &T) -> std::result::Result<U, E>,
            ) -> std::result::Result<$name<U>, E> {
                Ok($name { $($field: f(&join(prefix, stringify!($field)), &self.$field)?,)* })
            }

            pub fn visit(&self, prefix: &str, f: &mut impl FnMut(&str, &T)) {
                $(f(&join(prefix, stringify!($field)), &self.$field);)*
            }

            pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
                $(f(&join(prefix, stringify!($field)), &mut self.$field);)*
            }
        }
    };
}

leaf_struct!(
    /// `activation(Â · X · weight + bias)`.
    GcnLayer { weight, bias }
);

leaf_struct!(
    /// Weights of one cortical layer. `w_a`, `w_v`, `w_mu` are `F x F`;
    /// `w_m`, `w_w`, `w_rho` act on the `2F`-wide concatenation `[h_a, h_v]`.
    CorticalLayer { w_a, b_a, w_v, b_v, w_m, b_m, w_w, b_w, w_rho, b_rho, w_mu, b_mu }
);

leaf_struct!(
    /// Dense reconstruction head.
    HeadParams { weight, bias }
);

/// Per-modality graph convolutions followed by a cortical layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CorticalBlock<T = Matrix> {
    pub gcn_audio: GcnLayer<T>,
    pub gcn_visual: GcnLayer<T>,
    pub layer: CorticalLayer<T>,
}

impl<T> CorticalBlock<T> {
    pub fn try_map<U, E>(
        &self,
        prefix: &str,
        f: &mut impl FnMut(&str, &T) -> std::result::Result<U, E>,
    ) -> std::result::Result<CorticalBlock<U>, E> {
        Ok(CorticalBlock {
            gcn_audio: self.gcn_audio.try_map(&join(prefix, "gcn_audio"), f)?,
            gcn_visual: self.gcn_visual.try_map(&join(prefix, "gcn_visual"), f)?,
            layer: self.layer.try_map(&join(prefix, "cortical"), f)?,
        })
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(&str, &T)) {
        self.gcn_audio.visit(&join(prefix, "gcn_audio"), f);
        self.gcn_visual.visit(&join(prefix, "gcn_visual"), f);
        self.layer.visit(&join(prefix, "cortical"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        self.gcn_audio.visit_mut(&join(prefix, "gcn_audio"), f);
        self.gcn_visual.visit_mut(&join(prefix, "gcn_visual"), f);
        self.layer.visit_mut(&join(prefix, "cortical"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorticalParams<T = Matrix> {
    pub blocks: Vec<CorticalBlock<T>>,
}

/// Two independent GCN stacks, one per modality.
#[derive(Clone, Debug, PartialEq)]
pub struct CcaGnnParams<T = Matrix> {
    pub audio: Vec<GcnLayer<T>>,
    pub visual: Vec<GcnLayer<T>>,
}

fn glorot_gcn<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> GcnLayer {
    GcnLayer {
        weight: Matrix::glorot(fan_in, fan_out, rng),
        bias: Matrix::zeros(1, fan_out),
    }
}

/// Gain on the Glorot init of cortical-layer weights. Small weights start every
/// gate near 0.5 and the memory near its linear range.
pub const CORTICAL_INIT_GAIN: f64 = 0.1;

impl CorticalLayer {
    /// Glorot weights shrunk by `CORTICAL_INIT_GAIN`, zero biases.
    pub fn init<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let bias = || Matrix::zeros(1, width);
        Self {
            w_a: Matrix::glorot(width, width, rng).scale(CORTICAL_INIT_GAIN),
            b_a: bias(),
            w_v: Matrix::glorot(width, width, rng).scale(CORTICAL_INIT_GAIN),
            b_v: bias(),
            w_m: Matrix::glorot(2 * width, width, rng).scale(CORTICAL_INIT_GAIN),
            b_m: bias(),
            w_w: Matrix::glorot(2 * width, width, rng).scale(CORTICAL_INIT_GAIN),
            b_w: bias(),
            w_rho: Matrix::glorot(2 * width, width, rng).scale(CORTICAL_INIT_GAIN),
            b_rho: bias(),
            w_mu: Matrix::glorot(width, width, rng).scale(CORTICAL_INIT_GAIN),
            b_mu: bias(),
        }
    }

    /// All weights and biases zero.
    pub fn zeros(width: usize) -> Self {
        let z = |r| Matrix::zeros(r, width);
        Self {
            w_a: z(width),
            b_a: z(1),
            w_v: z(width),
            b_v: z(1),
            w_m: z(2 * width),
            b_m: z(1),
            w_w: z(2 * width),
            b_w: z(1),
            w_rho: z(2 * width),
            b_rho: z(1),
            w_mu: z(width),
            b_mu: z(1),
        }
    }
}

impl CorticalParams {
    pub fn init<R: Rng + ?Sized>(audio_dim: usize, visual_dim: usize, widths: &[usize], rng: &mut R) -> Self {
        let mut blocks = Vec::with_capacity(widths.len());
        let (mut fa, mut fv) = (audio_dim, visual_dim);
        for &w in widths {
            blocks.push(CorticalBlock {
                gcn_audio: glorot_gcn(fa, w, rng),
                gcn_visual: glorot_gcn(fv, w, rng),
                layer: CorticalLayer::init(w, rng),
            });
            fa = w;
            fv = w;
        }
        Self { blocks }
    }
}

impl CcaGnnParams {
    pub fn init<R: Rng + ?Sized>(audio_dim: usize, visual_dim: usize, widths: &[usize], rng: &mut R) -> Self {
        let stack = |mut fan_in: usize, rng: &mut R| {
            widths
                .iter()
                .map(|&w| {
                    let l = glorot_gcn(fan_in, w, rng);
                    fan_in = w;
                    l
                })
                .collect::<Vec<_>>()
        };
        let audio = stack(audio_dim, rng);
        let visual = stack(visual_dim, rng);
        Self { audio, visual }
    }
}

impl HeadParams {
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: Matrix::glorot(input, output, rng),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }
}

impl<T> CorticalParams<T> {
    pub fn try_map<U, E>(
        &self,
        prefix: &str,
        f: &mut impl FnMut(&str, &T) -> std::result::Result<U, E>,
    ) -> std::result::Result<CorticalParams<U>, E> {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| b.try_map(&join(prefix, &format!("block{i}")), f))
            .collect::<std::result::Result<_, E>>()?;
        Ok(CorticalParams { blocks })
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(&str, &T)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("block{i}")), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("block{i}")), f);
        }
    }
}

impl<T> CcaGnnParams<T> {
    pub fn try_map<U, E>(
        &self,
        prefix: &str,
        f: &mut impl FnMut(&str, &T) -> std::result::Result<U, E>,
    ) -> std::result::Result<CcaGnnParams<U>, E> {
        let mut stack = |name: &str, layers: &[GcnLayer<T>]| {
            layers
                .iter()
                .enumerate()
                .map(|(i, l)| l.try_map(&join(prefix, &format!("{name}{i}")), f))
                .collect::<std::result::Result<Vec<_>, E>>()
        };
        let audio = stack("audio", &self.audio)?;
        let visual = stack("visual", &self.visual)?;
        Ok(CcaGnnParams { audio, visual })
    }

    pub fn visit(&self, prefix: &str, f: &mut impl FnMut(&str, &T)) {
        for (i, l) in self.audio.iter().enumerate() {
            l.visit(&join(prefix, &format!("audio{i}")), f);
        }
        for (i, l) in self.visual.iter().enumerate() {
            l.visit(&join(prefix, &format!("visual{i}")), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        for (i, l) in self.audio.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("audio{i}")), f);
        }
        for (i, l) in self.visual.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("visual{i}")), f);
        }
    }
}

/// Weights of either encoder family.
#[derive(Clone, Debug, PartialEq)]
pub enum EncoderParams<T = Matrix> {
    Cortical(CorticalParams<T>),
    CcaGnn(CcaGnnParams<T>),
}

impl<T> EncoderParams<T> {
    pub fn try_map<U, E>(
        &self,
        f: &mut impl FnMut(&str, &T) -> std::result::Result<U, E>,
    ) -> std::result::Result<EncoderParams<U>, E> {
        Ok(match self {
            EncoderParams::Cortical(p) => EncoderParams::Cortical(p.try_map("cortical", f)?),
            EncoderParams::CcaGnn(p) => EncoderParams::CcaGnn(p.try_map("ccagnn", f)?),
        })
    }

    pub fn visit(&self, f: &mut impl FnMut(&str, &T)) {
        match self {
            EncoderParams::Cortical(p) => p.visit("cortical", f),
            EncoderParams::CcaGnn(p) => p.visit("ccagnn", f),
        }
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
        match self {
            EncoderParams::Cortical(p) => p.visit_mut("cortical", f),
            EncoderParams::CcaGnn(p) => p.visit_mut("ccagnn", f),
        }
    }
}

/// Named, ordered collection of matrices; the unit of checkpointing.
pub type NamedArrays = Vec<(String, Matrix)>;

/// Flattens a tree into `(name, matrix)` pairs in visit order.
pub fn to_named<T: Clone>(visit: impl FnOnce(&mut dyn FnMut(&str, &T))) -> Vec<(String, T)> {
    let mut out = Vec::new();
    visit(&mut |n: &str, m: &T| out.push((n.to_string(), m.clone())));
    out
}

/// Overwrites every matrix in a tree from `named`, checking names and shapes.
pub fn assign_named(
    visit_mut: impl FnOnce(&mut dyn FnMut(&str, &mut Matrix)),
    named: &[(String, Matrix)],
) -> Result<()> {
    let lookup: BTreeMap<&str, &Matrix> = named.iter().map(|(n, m)| (n.as_str(), m)).collect();
    let mut err = None;
    let mut used = 0;
    visit_mut(&mut |name: &str, slot: &mut Matrix| {
        if err.is_some() {
            return;
        }
        match lookup.get(name) {
            Some(m) if m.shape() == slot.shape() => {
                *slot = (*m).clone();
                used += 1;
            }
            Some(m) => {
                err = Some(Error::Format(format!(
                    "array {name} has shape {:?}, expected {:?}",
                    m.shape(),
                    slot.shape()
                )))
            }
            None => err = Some(Error::Format(format!("missing array {name}"))),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if used != named.len() {
        return Err(Error::Format(format!(
            "{} arrays supplied, {used} expected",
            named.len()
        )));
    }
    Ok(())
}
