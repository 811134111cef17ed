//! Recording engine and its reverse pass.
//!
//! Complex adjoints follow the convention `∂L/∂re + i·∂L/∂im`, so for a
//! complex-linear map `A` the input adjoint is `Aᴴ·ḡ` and gradients with
//! respect to real inputs come out real.

use alloc::vec;
use alloc::vec::Vec;

use crate::spectral::{Complex64, Fft2Plan, RealPlane, Spectrum};
use crate::unroll::{
    build_filters_with, conv_full_values, divide_values, in_window, l1_normalize_values, mse_value,
    soft_threshold_value, Engine, ModelParams, Network, ParamField, TAPS,
};
use crate::{Error, Result};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(RealPlane),
    Complex(Spectrum),
    Scalar(f64),
}

/// Where a learnable leaf lives inside [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    pub field: ParamField,
    pub offset: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamSlot),
    Opaque,
    ConvFull(NodeId, NodeId),
    Add(NodeId, NodeId),
    Embed(NodeId),
    Fft2(NodeId),
    Ifft2(NodeId),
    Mul { a: NodeId, b: NodeId, conjugate_a: bool },
    AddComplex(NodeId, NodeId),
    ScaleComplex { s: NodeId, a: NodeId },
    AbsSq(NodeId),
    Scale { s: NodeId, a: NodeId },
    AddScalar { a: NodeId, s: NodeId },
    Divide { num: NodeId, den: NodeId },
    SoftThreshold { x: NodeId, t: NodeId },
    Relu(NodeId),
    L1Normalize(NodeId),
    MaskWindow { x: NodeId, size: usize },
    Mse { x: NodeId, target: RealPlane },
    AddScalars(NodeId, NodeId),
    ScaleScalar { a: NodeId, factor: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Value,
}

/// One gradient array per learnable field of [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub base: Vec<f64>,
    pub mixing: Vec<f64>,
    pub threshold: Vec<f64>,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            base: vec![0.0; params.field(ParamField::Base).len()],
            mixing: vec![0.0; params.field(ParamField::Mixing).len()],
            threshold: vec![0.0; params.field(ParamField::Threshold).len()],
            lambda: vec![0.0; params.field(ParamField::Lambda).len()],
            eta: vec![0.0; params.field(ParamField::Eta).len()],
        }
    }

    pub fn field(&self, field: ParamField) -> &[f64] {
        match field {
            ParamField::Base => &self.base,
            ParamField::Mixing => &self.mixing,
            ParamField::Threshold => &self.threshold,
            ParamField::Lambda => &self.lambda,
            ParamField::Eta => &self.eta,
        }
    }

    pub fn field_mut(&mut self, field: ParamField) -> &mut [f64] {
        match field {
            ParamField::Base => &mut self.base,
            ParamField::Mixing => &mut self.mixing,
            ParamField::Threshold => &mut self.threshold,
            ParamField::Lambda => &mut self.lambda,
            ParamField::Eta => &mut self.eta,
        }
    }

    /// Concatenation in the same order as [`ModelParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for f in ParamField::ALL {
            out.extend_from_slice(self.field(f));
        }
        out
    }

    /// Elementwise sum; shapes must agree.
    pub fn accumulate(&mut self, other: &GradientSet) -> Result<()> {
        for f in ParamField::ALL {
            let (dst, src) = (self.field_mut(f), other.field(f));
            if dst.len() != src.len() {
                return Err(Error::ShapeMismatch("gradient sets"));
            }
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for f in ParamField::ALL {
            for v in self.field_mut(f) {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamField::ALL.iter().all(|&f| self.field(f).iter().all(|v| v.is_finite()))
    }
}

/// Adjoint of one node after a reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Adjoint {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
    Scalar(f64),
}

/// Computation record: every primitive applied during a forward pass, in
/// execution order, with its output value.
#[derive(Debug, Clone)]
pub struct Tape {
    plan: Fft2Plan,
    nodes: Vec<Node>,
    field_lens: [usize; 5],
}

fn field_slot(field: ParamField) -> usize {
    ParamField::ALL.iter().position(|&f| f == field).expect("known field")
}

impl Tape {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            plan: Fft2Plan::new(height, width),
            nodes: Vec::new(),
            field_lens: [0; 5],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    pub fn real(&self, id: NodeId) -> &RealPlane {
        match &self.nodes[id.0].value {
            Value::Real(p) => p,
            other => panic!("node {} is not real: {other:?}", id.0),
        }
    }

    pub fn complex(&self, id: NodeId) -> &Spectrum {
        match &self.nodes[id.0].value {
            Value::Complex(s) => s,
            other => panic!("node {} is not complex: {other:?}", id.0),
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        match &self.nodes[id.0].value {
            Value::Scalar(s) => *s,
            other => panic!("node {} is not scalar: {other:?}", id.0),
        }
    }

    /// Learnable real leaf (a 3×3 filter or any plane in tests).
    pub fn param_real(&mut self, plane: RealPlane, slot: ParamSlot) -> NodeId {
        self.note_slot(slot, plane.len());
        self.push(Op::Param(slot), Value::Real(plane))
    }

    pub fn param_scalar(&mut self, value: f64, slot: ParamSlot) -> NodeId {
        self.note_slot(slot, 1);
        self.push(Op::Param(slot), Value::Scalar(value))
    }

    fn note_slot(&mut self, slot: ParamSlot, len: usize) {
        let i = field_slot(slot.field);
        self.field_lens[i] = self.field_lens[i].max(slot.offset + len);
    }

    /// Records a value computed outside the differentiable primitive set.
    /// A gradient reaching it makes [`Tape::backward`] fail.
    pub fn opaque(&mut self, value: Value) -> NodeId {
        self.push(Op::Opaque, value)
    }

    /// Registers every learnable of `params` as a leaf and lays out the
    /// unrolled network on this tape.
    pub fn network(&mut self, params: &ModelParams) -> Result<Network<Tape>> {
        params.validate()?;
        let (layers, channels) = (params.layers(), params.channels());
        let w = &params.filters;
        let base: Vec<NodeId> = (0..channels)
            .map(|i| {
                self.param_real(
                    w.base_filter(i),
                    ParamSlot {
                        field: ParamField::Base,
                        offset: i * TAPS,
                    },
                )
            })
            .collect();
        let mixing: Vec<Vec<Vec<NodeId>>> = (1..layers)
            .map(|l| {
                (0..channels)
                    .map(|i| {
                        (0..channels)
                            .map(|j| {
                                self.param_real(
                                    w.mixing_filter(l, i, j),
                                    ParamSlot {
                                        field: ParamField::Mixing,
                                        offset: w.mixing_offset(l, i, j),
                                    },
                                )
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let banks = build_filters_with(self, &base, &mixing)?;
        let lp = &params.layer_params;
        let mut per_layer = |field: ParamField, values: &[f64]| -> Vec<Vec<NodeId>> {
            (0..layers)
                .map(|l| {
                    (0..channels)
                        .map(|i| {
                            let offset = l * channels + i;
                            self.param_scalar(values[offset], ParamSlot { field, offset })
                        })
                        .collect()
                })
                .collect()
        };
        let threshold = per_layer(ParamField::Threshold, &lp.threshold);
        let lambda = per_layer(ParamField::Lambda, &lp.lambda);
        let eta = (0..channels)
            .map(|i| {
                self.param_scalar(
                    lp.eta[i],
                    ParamSlot {
                        field: ParamField::Eta,
                        offset: i,
                    },
                )
            })
            .collect();
        let epsilon = self.scalar_const(lp.epsilon);
        // Make sure empty fields still produce correctly sized gradients.
        for f in ParamField::ALL {
            let i = field_slot(f);
            self.field_lens[i] = self.field_lens[i].max(params.field(f).len());
        }
        Ok(Network {
            banks,
            threshold,
            lambda,
            eta,
            epsilon,
            support: params.support,
            restrict_support: params.restrict_support,
        })
    }

    /// Which side of every kink (threshold, clamp, zero-sum fallback) each
    /// recorded element sits on. Two forward passes with equal patterns lie
    /// in the same smooth piece of the network.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::SoftThreshold { x, t } => {
                    let t = self.scalar(*t);
                    out.extend(self.real(*x).as_slice().iter().map(|v| v.abs() > t));
                }
                Op::Relu(x) => out.extend(self.real(*x).as_slice().iter().map(|&v| v > 0.0)),
                Op::L1Normalize(x) => {
                    // |v| bends at zero; the all-zero fallback is covered too.
                    for &v in self.real(*x).as_slice() {
                        out.push(v > 0.0);
                        out.push(v < 0.0);
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Reverse pass from a scalar node; returns per-parameter gradients.
    pub fn backward(&self, loss: NodeId) -> Result<GradientSet> {
        let adjoints = self.adjoints(loss)?;
        let mut out = GradientSet {
            base: vec![0.0; self.field_lens[0]],
            mixing: vec![0.0; self.field_lens[1]],
            threshold: vec![0.0; self.field_lens[2]],
            lambda: vec![0.0; self.field_lens[3]],
            eta: vec![0.0; self.field_lens[4]],
        };
        for (node, adj) in self.nodes.iter().zip(&adjoints) {
            if let (Op::Param(slot), Some(adj)) = (&node.op, adj) {
                let dst = out.field_mut(slot.field);
                match adj {
                    Adjoint::Real(g) => {
                        for (d, v) in dst[slot.offset..slot.offset + g.len()].iter_mut().zip(g) {
                            *d += v;
                        }
                    }
                    Adjoint::Scalar(g) => dst[slot.offset] += g,
                    Adjoint::Complex(_) => unreachable!("parameters are real"),
                }
            }
        }
        Ok(out)
    }

    /// Reverse pass returning the adjoint of every node (None where the
    /// loss does not depend on it).
    pub fn adjoints(&self, loss: NodeId) -> Result<Vec<Option<Adjoint>>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::UnrecordedNode(loss.0));
        }
        if !matches!(self.nodes[loss.0].value, Value::Scalar(_)) {
            return Err(Error::ShapeMismatch("backward needs a scalar loss"));
        }
        self.adjoints_seeded(loss, Adjoint::Scalar(1.0))
    }

    /// Pulls an arbitrary adjoint `seed` back from `output`, i.e. applies
    /// the transposed Jacobian of everything recorded up to `output`.
    pub fn adjoints_seeded(&self, output: NodeId, seed: Adjoint) -> Result<Vec<Option<Adjoint>>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::UnrecordedNode(output.0));
        }
        let matches = match (&self.nodes[output.0].value, &seed) {
            (Value::Real(p), Adjoint::Real(g)) => p.len() == g.len(),
            (Value::Complex(s), Adjoint::Complex(g)) => s.as_slice().len() == g.len(),
            (Value::Scalar(_), Adjoint::Scalar(_)) => true,
            _ => false,
        };
        if !matches {
            return Err(Error::ShapeMismatch("adjoint seed"));
        }
        let mut adj: Vec<Option<Adjoint>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].clone() else { continue };
            self.propagate(idx, &g, &mut adj)?;
        }
        Ok(adj)
    }

    fn propagate(&self, idx: usize, g: &Adjoint, adj: &mut [Option<Adjoint>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::Opaque => return Err(Error::UnrecordedNode(idx)),
            Op::ConvFull(a, b) => {
                let g = real_adj(g);
                let out = self.real(NodeId(idx));
                let (av, bv) = (self.real(*a), self.real(*b));
                let (hb, wb) = bv.dims();
                let (ha, wa) = av.dims();
                let ow = out.width();
                let mut ga = vec![0.0; av.len()];
                let mut gb = vec![0.0; bv.len()];
                for i in 0..ha {
                    for j in 0..wa {
                        let a_ij = av.get(i, j);
                        let mut acc = 0.0;
                        for p in 0..hb {
                            for q in 0..wb {
                                let go = g[(i + p) * ow + j + q];
                                acc += go * bv.get(p, q);
                                gb[p * wb + q] += go * a_ij;
                            }
                        }
                        ga[i * wa + j] = acc;
                    }
                }
                add_real(adj, *a, ga);
                add_real(adj, *b, gb);
            }
            Op::Add(a, b) => {
                let g = real_adj(g);
                add_real(adj, *a, g.to_vec());
                add_real(adj, *b, g.to_vec());
            }
            Op::Embed(x) => {
                let g = real_adj(g);
                let size = self.real(*x).height();
                let (h, w) = self.grid();
                let half = (size / 2) as isize;
                let mut gx = vec![0.0; size * size];
                for r in 0..size {
                    let row = (r as isize - half).rem_euclid(h as isize) as usize;
                    for c in 0..size {
                        let col = (c as isize - half).rem_euclid(w as isize) as usize;
                        gx[r * size + c] = g[row * w + col];
                    }
                }
                add_real(adj, *x, gx);
            }
            Op::Fft2(x) => {
                let mut data = complex_adj(g).to_vec();
                self.plan.inverse_unnormalized_in_place(&mut data);
                add_real(adj, *x, data.iter().map(|v| v.re).collect());
            }
            Op::Ifft2(s) => {
                let g = real_adj(g);
                let scale = 1.0 / g.len() as f64;
                let mut data: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v * scale, 0.0)).collect();
                self.plan.forward_in_place(&mut data);
                add_complex(adj, *s, data);
            }
            Op::Mul { a, b, conjugate_a } => {
                let g = complex_adj(g);
                let (av, bv) = (self.complex(*a).as_slice(), self.complex(*b).as_slice());
                let (ga, gb): (Vec<Complex64>, Vec<Complex64>) = if *conjugate_a {
                    (
                        g.iter().zip(bv).map(|(g, b)| g.conj() * b).collect(),
                        g.iter().zip(av).map(|(g, a)| g * a).collect(),
                    )
                } else {
                    (
                        g.iter().zip(bv).map(|(g, b)| g * b.conj()).collect(),
                        g.iter().zip(av).map(|(g, a)| g * a.conj()).collect(),
                    )
                };
                add_complex(adj, *a, ga);
                add_complex(adj, *b, gb);
            }
            Op::AddComplex(a, b) => {
                let g = complex_adj(g);
                add_complex(adj, *a, g.to_vec());
                add_complex(adj, *b, g.to_vec());
            }
            Op::ScaleComplex { s, a } => {
                let g = complex_adj(g);
                let sv = self.scalar(*s);
                let av = self.complex(*a).as_slice();
                let gs: f64 = g.iter().zip(av).map(|(g, a)| a.re * g.re + a.im * g.im).sum();
                add_complex(adj, *a, g.iter().map(|v| v * sv).collect());
                add_scalar(adj, *s, gs);
            }
            Op::AbsSq(a) => {
                let g = real_adj(g);
                let av = self.complex(*a).as_slice();
                add_complex(adj, *a, g.iter().zip(av).map(|(g, a)| a * (2.0 * g)).collect());
            }
            Op::Scale { s, a } => {
                let g = real_adj(g);
                let sv = self.scalar(*s);
                let av = self.real(*a).as_slice();
                let gs: f64 = g.iter().zip(av).map(|(g, a)| g * a).sum();
                add_real(adj, *a, g.iter().map(|v| v * sv).collect());
                add_scalar(adj, *s, gs);
            }
            Op::AddScalar { a, s } => {
                let g = real_adj(g);
                add_real(adj, *a, g.to_vec());
                add_scalar(adj, *s, g.iter().sum());
            }
            Op::Divide { num, den } => {
                let g = complex_adj(g);
                let nv = self.complex(*num).as_slice();
                let dv = self.real(*den).as_slice();
                add_complex(adj, *num, g.iter().zip(dv).map(|(g, d)| g / d).collect());
                add_real(
                    adj,
                    *den,
                    g.iter()
                        .zip(nv)
                        .zip(dv)
                        .map(|((g, n), d)| -(n.re * g.re + n.im * g.im) / (d * d))
                        .collect(),
                );
            }
            Op::SoftThreshold { x, t } => {
                let g = real_adj(g);
                let tv = self.scalar(*t);
                let xv = self.real(*x).as_slice();
                let mut gt = 0.0;
                let gx = g
                    .iter()
                    .zip(xv)
                    .map(|(g, &x)| {
                        if x > tv {
                            gt -= g;
                            *g
                        } else if x < -tv {
                            gt += g;
                            *g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                add_real(adj, *x, gx);
                add_scalar(adj, *t, gt);
            }
            Op::Relu(x) => {
                let g = real_adj(g);
                let xv = self.real(*x).as_slice();
                add_real(adj, *x, g.iter().zip(xv).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect());
            }
            Op::L1Normalize(x) => {
                let g = real_adj(g);
                let xv = self.real(*x).as_slice();
                let total: f64 = xv.iter().map(|v| v.abs()).sum();
                if total > 0.0 {
                    let dot: f64 = g.iter().zip(xv).map(|(g, x)| g * x).sum();
                    let correction = dot / (total * total);
                    let gx = g
                        .iter()
                        .zip(xv)
                        .map(|(g, &x)| {
                            let sign = if x > 0.0 {
                                1.0
                            } else if x < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            g / total - sign * correction
                        })
                        .collect();
                    add_real(adj, *x, gx);
                }
            }
            Op::MaskWindow { x, size } => {
                let g = real_adj(g);
                let (h, w) = self.grid();
                let gx = (0..h * w)
                    .map(|k| if in_window(k / w, k % w, h, w, *size) { g[k] } else { 0.0 })
                    .collect();
                add_real(adj, *x, gx);
            }
            Op::Mse { x, target } => {
                let g = scalar_adj(g);
                let xv = self.real(*x).as_slice();
                let n = xv.len() as f64;
                add_real(
                    adj,
                    *x,
                    xv.iter().zip(target.as_slice()).map(|(a, t)| g * 2.0 * (a - t) / n).collect(),
                );
            }
            Op::AddScalars(a, b) => {
                let g = scalar_adj(g);
                add_scalar(adj, *a, g);
                add_scalar(adj, *b, g);
            }
            Op::ScaleScalar { a, factor } => add_scalar(adj, *a, scalar_adj(g) * factor),
        }
        Ok(())
    }
}

fn real_adj(g: &Adjoint) -> &[f64] {
    match g {
        Adjoint::Real(v) => v,
        _ => unreachable!("adjoint kind matches node kind"),
    }
}

fn complex_adj(g: &Adjoint) -> &[Complex64] {
    match g {
        Adjoint::Complex(v) => v,
        _ => unreachable!("adjoint kind matches node kind"),
    }
}

fn scalar_adj(g: &Adjoint) -> f64 {
    match g {
        Adjoint::Scalar(v) => *v,
        _ => unreachable!("adjoint kind matches node kind"),
    }
}

fn add_real(adj: &mut [Option<Adjoint>], id: NodeId, g: Vec<f64>) {
    match &mut adj[id.0] {
        Some(Adjoint::Real(acc)) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        slot @ None => *slot = Some(Adjoint::Real(g)),
        _ => unreachable!("adjoint kind matches node kind"),
    }
}

fn add_complex(adj: &mut [Option<Adjoint>], id: NodeId, g: Vec<Complex64>) {
    match &mut adj[id.0] {
        Some(Adjoint::Complex(acc)) => {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        slot @ None => *slot = Some(Adjoint::Complex(g)),
        _ => unreachable!("adjoint kind matches node kind"),
    }
}

fn add_scalar(adj: &mut [Option<Adjoint>], id: NodeId, g: f64) {
    match &mut adj[id.0] {
        Some(Adjoint::Scalar(acc)) => *acc += g,
        slot @ None => *slot = Some(Adjoint::Scalar(g)),
        _ => unreachable!("adjoint kind matches node kind"),
    }
}

impl Engine for Tape {
    type Real = NodeId;
    type Complex = NodeId;
    type Scalar = NodeId;

    fn grid(&self) -> (usize, usize) {
        (self.plan.height(), self.plan.width())
    }

    fn real_const(&mut self, plane: RealPlane) -> NodeId {
        self.push(Op::Constant, Value::Real(plane))
    }

    fn complex_const(&mut self, spectrum: Spectrum) -> NodeId {
        self.push(Op::Constant, Value::Complex(spectrum))
    }

    fn scalar_const(&mut self, value: f64) -> NodeId {
        self.push(Op::Constant, Value::Scalar(value))
    }

    fn real_value<'a>(&'a self, x: &'a NodeId) -> &'a RealPlane {
        self.real(*x)
    }

    fn scalar_value(&self, x: &NodeId) -> f64 {
        self.scalar(*x)
    }

    fn conv_full(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let v = conv_full_values(self.real(*a), self.real(*b));
        self.push(Op::ConvFull(*a, *b), Value::Real(v))
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let (x, y) = (self.real(*a), self.real(*b));
        x.check_same_dims(y)?;
        let v = RealPlane::from_parts(
            x.height(),
            x.width(),
            x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p + q).collect(),
        );
        Ok(self.push(Op::Add(*a, *b), Value::Real(v)))
    }

    fn embed(&mut self, filter: &NodeId) -> Result<NodeId> {
        let (h, w) = self.grid();
        let v = crate::spectral::embed_centered(self.real(*filter), h, w)?;
        Ok(self.push(Op::Embed(*filter), Value::Real(v)))
    }

    fn fft2(&mut self, x: &NodeId) -> NodeId {
        let v = self.plan.forward(self.real(*x));
        self.push(Op::Fft2(*x), Value::Complex(v))
    }

    fn ifft2(&mut self, x: &NodeId) -> Result<NodeId> {
        let v = self.plan.inverse(self.complex(*x))?;
        Ok(self.push(Op::Ifft2(*x), Value::Real(v)))
    }

    fn mul(&mut self, a: &NodeId, b: &NodeId, conjugate_a: bool) -> NodeId {
        let v = crate::spectral::spectrum_combine(self.complex(*a), self.complex(*b), conjugate_a)
            .expect("spectra share the tape grid");
        self.push(
            Op::Mul {
                a: *a,
                b: *b,
                conjugate_a,
            },
            Value::Complex(v),
        )
    }

    fn add_complex(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let (x, y) = (self.complex(*a), self.complex(*b));
        let v = Spectrum::from_parts(
            x.height(),
            x.width(),
            x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p + q).collect(),
        );
        self.push(Op::AddComplex(*a, *b), Value::Complex(v))
    }

    fn scale_complex(&mut self, s: &NodeId, a: &NodeId) -> NodeId {
        let sv = self.scalar(*s);
        let x = self.complex(*a);
        let v = Spectrum::from_parts(x.height(), x.width(), x.as_slice().iter().map(|p| p * sv).collect());
        self.push(Op::ScaleComplex { s: *s, a: *a }, Value::Complex(v))
    }

    fn abs_sq(&mut self, a: &NodeId) -> NodeId {
        let x = self.complex(*a);
        let v = RealPlane::from_parts(x.height(), x.width(), x.as_slice().iter().map(|p| p.norm_sqr()).collect());
        self.push(Op::AbsSq(*a), Value::Real(v))
    }

    fn scale(&mut self, s: &NodeId, a: &NodeId) -> NodeId {
        let sv = self.scalar(*s);
        let v = self.real(*a).map(|p| sv * p);
        self.push(Op::Scale { s: *s, a: *a }, Value::Real(v))
    }

    fn add_scalar(&mut self, a: &NodeId, s: &NodeId) -> NodeId {
        let sv = self.scalar(*s);
        let v = self.real(*a).map(|p| p + sv);
        self.push(Op::AddScalar { a: *a, s: *s }, Value::Real(v))
    }

    fn divide(&mut self, num: &NodeId, den: &NodeId) -> Result<NodeId> {
        let v = divide_values(self.complex(*num), self.real(*den))?;
        Ok(self.push(Op::Divide { num: *num, den: *den }, Value::Complex(v)))
    }

    fn soft_threshold(&mut self, x: &NodeId, threshold: &NodeId) -> NodeId {
        let t = self.scalar(*threshold);
        let v = self.real(*x).map(|p| soft_threshold_value(p, t));
        self.push(Op::SoftThreshold { x: *x, t: *threshold }, Value::Real(v))
    }

    fn relu(&mut self, x: &NodeId) -> NodeId {
        let v = self.real(*x).map(|p| p.max(0.0));
        self.push(Op::Relu(*x), Value::Real(v))
    }

    fn l1_normalize(&mut self, x: &NodeId) -> NodeId {
        let v = l1_normalize_values(self.real(*x));
        self.push(Op::L1Normalize(*x), Value::Real(v))
    }

    fn mask_window(&mut self, x: &NodeId, size: usize) -> NodeId {
        let p = self.real(*x);
        let (h, w) = p.dims();
        let v = RealPlane::from_fn(h, w, |r, c| if in_window(r, c, h, w, size) { p.get(r, c) } else { 0.0 });
        self.push(Op::MaskWindow { x: *x, size }, Value::Real(v))
    }

    fn mse(&mut self, x: &NodeId, target: &RealPlane) -> Result<NodeId> {
        let v = mse_value(self.real(*x), target)?;
        Ok(self.push(
            Op::Mse {
                x: *x,
                target: target.clone(),
            },
            Value::Scalar(v),
        ))
    }

    fn add_scalars(&mut self, a: &NodeId, b: &NodeId) -> NodeId {
        let v = self.scalar(*a) + self.scalar(*b);
        self.push(Op::AddScalars(*a, *b), Value::Scalar(v))
    }

    fn scale_scalar(&mut self, a: &NodeId, factor: f64) -> NodeId {
        let v = self.scalar(*a) * factor;
        self.push(Op::ScaleScalar { a: *a, factor }, Value::Scalar(v))
    }
}
