//! Factorized bilinear scoring functions and their backward passes.
//!
//! Every variant maps a query `(s, p, t)` to a fused vector `g` of the
//! entity dimension and scores all candidate objects with `<g, e_o>`:
//!
//! | variant | fused vector |
//! |---------|--------------|
//! | LowFER  | `SumPool(U^T e_s * V^T e_p, k)` |
//! | T       | `SumPool(U^T e_s * V^T (e_p . e_t), k)` |
//! | TNT     | `SumPool(U^T e_s * V^T (e_p^t . e_t + e_p), k)` |
//! | CFB     | `SumPool(U^T e_s * R^T (V^T e_p * Q^T e_t), k)` |
//! | FTP     | `U^T e_s * V^T e_p * Q^T e_t` (rank 1) |
//!
//! `*` and `.` are both elementwise products. Gradients are derived by
//! hand; `gradcheck` verifies them against central differences.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cycles::{TimeEncoder, TimeTables};
use crate::data::QueryKey;
use crate::error::{Error, Result};
use crate::gradcheck::ParameterSet;
use crate::tensor::{hadamard, matvec, matvec_t, sum_pool, sum_pool_adjoint, DenseMatrix, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[serde(rename = "lowfer")]
    LowFer,
    T,
    Tnt,
    Cfb,
    Ftp,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::LowFer, Variant::T, Variant::Tnt, Variant::Cfb, Variant::Ftp];

    pub fn name(self) -> &'static str {
        match self {
            Variant::LowFer => "lowfer",
            Variant::T => "t",
            Variant::Tnt => "tnt",
            Variant::Cfb => "cfb",
            Variant::Ftp => "ftp",
        }
    }

    pub fn uses_time(self) -> bool {
        self != Variant::LowFer
    }

    /// T and TNT modulate relation features elementwise by time.
    pub fn modulates_relation(self) -> bool {
        matches!(self, Variant::T | Variant::Tnt)
    }

    pub fn has_time_projection(self) -> bool {
        matches!(self, Variant::Cfb | Variant::Ftp)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}` (expected lowfer|t|tnt|cfb|ftp)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Ste,
    Cte,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Ste => "ste",
            EncoderKind::Cte => "cte",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ste" => Ok(EncoderKind::Ste),
            "cte" => Ok(EncoderKind::Cte),
            _ => Err(Error::Config(format!("unknown encoder `{s}` (expected ste|cte)"))),
        }
    }
}

/// Shapes that determine a model's parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub variant: Variant,
    pub num_entities: usize,
    /// Number of original relations; the relation tables hold `2 * num_relations` rows.
    pub num_relations: usize,
    pub d_e: usize,
    pub d_r: usize,
    pub d_t: usize,
    pub k: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if self.d_e == 0 || self.d_r == 0 || self.d_t == 0 || self.k == 0 {
            return Err(Error::Config("dimensions and rank must be positive".into()));
        }
        if self.num_entities == 0 || self.num_relations == 0 {
            return Err(Error::Config("model needs at least one entity and one relation".into()));
        }
        if self.variant == Variant::Ftp && self.k != 1 {
            return Err(Error::Config(format!("ftp requires k = 1, got k = {}", self.k)));
        }
        if self.variant.modulates_relation() && self.d_t != self.d_r {
            return Err(Error::Config(format!(
                "{} modulates relations by time and needs d_t == d_r ({} != {})",
                self.variant, self.d_t, self.d_r
            )));
        }
        Ok(())
    }

    pub fn projection_dim(&self) -> usize {
        self.k * self.d_e
    }
}

/// All learnable tensors. Gradient buffers and optimizer moments reuse this
/// type so that every tensor has a same-shaped counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `|E| x d_e`
    pub entity: DenseMatrix,
    /// `2|R| x d_r`; the time-aware `e_p^t` for TNT.
    pub relation: DenseMatrix,
    /// `2|R| x d_r`, TNT only.
    pub static_relation: Option<DenseMatrix>,
    pub time: Option<TimeTables>,
    /// `d_e x k d_e`
    pub u: DenseMatrix,
    /// `d_r x k d_e`
    pub v: DenseMatrix,
    /// `d_t x k d_e`, CFB and FTP only.
    pub q: Option<DenseMatrix>,
    /// `k d_e x k d_e`, CFB only.
    pub r_mid: Option<DenseMatrix>,
}

impl ModelParams {
    pub fn zeros(shape: &ModelShape, encoder: Option<&TimeEncoder>) -> Result<Self> {
        shape.validate()?;
        let kd = shape.projection_dim();
        let variant = shape.variant;
        let time = if variant.uses_time() {
            let encoder = encoder.ok_or_else(|| Error::Config(format!("{variant} needs a time encoder")))?;
            Some(encoder.zero_tables(shape.d_t))
        } else {
            None
        };
        Ok(Self {
            entity: DenseMatrix::zeros(shape.num_entities, shape.d_e),
            relation: DenseMatrix::zeros(2 * shape.num_relations, shape.d_r),
            static_relation: (variant == Variant::Tnt)
                .then(|| DenseMatrix::zeros(2 * shape.num_relations, shape.d_r)),
            time,
            u: DenseMatrix::zeros(shape.d_e, kd),
            v: DenseMatrix::zeros(shape.d_r, kd),
            q: variant.has_time_projection().then(|| DenseMatrix::zeros(shape.d_t, kd)),
            r_mid: (variant == Variant::Cfb).then(|| DenseMatrix::zeros(kd, kd)),
        })
    }

    /// Random initialization:
    /// embeddings ~ N(0, 0.05); `U`, `V`, `Q` uniform in the Xavier range;
    /// `R_mid` = I + N(0, 0.01). Time tables of the modulation variants are
    /// centred so that `e_t` starts near the all-ones vector.
    pub fn init<R: Rng + ?Sized>(shape: &ModelShape, encoder: Option<&TimeEncoder>, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(shape, encoder)?;
        let embed = Normal::new(0.0, 0.05).expect("valid normal");
        let fill_normal = |m: &mut DenseMatrix, rng: &mut R| {
            m.as_mut_slice().iter_mut().for_each(|x| *x = embed.sample(rng));
        };
        fill_normal(&mut p.entity, rng);
        fill_normal(&mut p.relation, rng);
        if let Some(m) = p.static_relation.as_mut() {
            fill_normal(m, rng);
        }
        if let Some(time) = p.time.as_mut() {
            let tables = time.tensors_mut();
            let offset = if shape.variant.modulates_relation() {
                1.0 / tables.len() as f64
            } else {
                0.0
            };
            for (_, m) in tables {
                fill_normal(m, rng);
                m.as_mut_slice().iter_mut().for_each(|x| *x += offset);
            }
        }
        let xavier = |m: &mut DenseMatrix, rng: &mut R| {
            let bound = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
            m.as_mut_slice()
                .iter_mut()
                .for_each(|x| *x = rng.random_range(-bound..bound));
        };
        xavier(&mut p.u, rng);
        xavier(&mut p.v, rng);
        if let Some(q) = p.q.as_mut() {
            xavier(q, rng);
        }
        if let Some(r) = p.r_mid.as_mut() {
            let noise = Normal::new(0.0, 0.01).expect("valid normal");
            let n = r.rows();
            for i in 0..n {
                for j in 0..n {
                    let base = if i == j { 1.0 } else { 0.0 };
                    r.set(i, j, base + noise.sample(rng));
                }
            }
        }
        Ok(p)
    }

    /// Named tensors in a fixed canonical order.
    pub fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        let mut out = vec![("entity".to_string(), &self.entity), ("relation".to_string(), &self.relation)];
        if let Some(m) = &self.static_relation {
            out.push(("static_relation".to_string(), m));
        }
        if let Some(t) = &self.time {
            out.extend(t.tensors());
        }
        out.push(("u".to_string(), &self.u));
        out.push(("v".to_string(), &self.v));
        if let Some(m) = &self.q {
            out.push(("q".to_string(), m));
        }
        if let Some(m) = &self.r_mid {
            out.push(("r_mid".to_string(), m));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut DenseMatrix)> {
        let mut out = vec![
            ("entity".to_string(), &mut self.entity),
            ("relation".to_string(), &mut self.relation),
        ];
        if let Some(m) = &mut self.static_relation {
            out.push(("static_relation".to_string(), m));
        }
        if let Some(t) = &mut self.time {
            out.extend(t.tensors_mut());
        }
        out.push(("u".to_string(), &mut self.u));
        out.push(("v".to_string(), &mut self.v));
        if let Some(m) = &mut self.q {
            out.push(("q".to_string(), m));
        }
        if let Some(m) = &mut self.r_mid {
            out.push(("r_mid".to_string(), m));
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.fill(0.0);
        out
    }

    pub fn fill(&mut self, value: f64) {
        for (_, m) in self.tensors_mut() {
            m.fill(value);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }
}

impl ParameterSet for ModelParams {
    fn tensor_count(&self) -> usize {
        self.tensors().len()
    }

    fn tensor_name(&self, index: usize) -> String {
        self.tensors().swap_remove(index).0
    }

    fn tensor(&self, index: usize) -> &[f64] {
        self.tensors().swap_remove(index).1.as_slice()
    }

    fn tensor_mut(&mut self, index: usize) -> &mut [f64] {
        self.tensors_mut().swap_remove(index).1.as_mut_slice()
    }
}

pub fn count_parameters(params: &ModelParams) -> usize {
    params.count()
}

/// Embedding vectors entering a fusion.
#[derive(Debug, Clone, Copy)]
pub struct FusionInputs<'a> {
    pub e_s: &'a [f64],
    /// `e_p`, or the time-aware `e_p^t` for TNT.
    pub e_p: &'a [f64],
    pub e_p_static: Option<&'a [f64]>,
    pub e_t: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
enum RelationPath {
    /// `y = V^T x` where `x` is `e_p` (LowFER).
    Direct { e_p: Vec<f64> },
    /// `y = V^T m`, `m = e_p . e_t (+ e_p_static)`.
    Modulated {
        e_p: Vec<f64>,
        e_t: Vec<f64>,
        m: Vec<f64>,
        with_static: bool,
    },
    /// `y = R^T (a * b)` (`chained`) or `y = a * b`, with `a = V^T e_p`, `b = Q^T e_t`.
    Projected {
        e_p: Vec<f64>,
        e_t: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        h: Vec<f64>,
        chained: bool,
    },
}

/// Fused query vector with the intermediates its backward pass needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedQuery {
    pub key: Option<QueryKey>,
    /// Fused vector after hidden dropout; this is what gets scored.
    pub g: DenseVector,
    k: usize,
    e_s: Vec<f64>,
    xs: Vec<f64>,
    y: Vec<f64>,
    relation: RelationPath,
    input_mask: Option<Vec<f64>>,
    hidden_mask: Option<Vec<f64>>,
}

/// Input/output gradients of one fused row.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub e_s: Vec<f64>,
    pub e_p: Vec<f64>,
    pub e_p_static: Option<Vec<f64>>,
    pub e_t: Option<Vec<f64>>,
}

fn required<'a>(m: Option<&'a DenseMatrix>, name: &str, variant: Variant) -> Result<&'a DenseMatrix> {
    m.ok_or_else(|| Error::Config(format!("{variant} requires projection `{name}`")))
}

fn required_input<'a>(x: Option<&'a [f64]>, name: &str, variant: Variant) -> Result<&'a [f64]> {
    x.ok_or_else(|| Error::Config(format!("{variant} requires input `{name}`")))
}

/// Masks are the per-coordinate multipliers of inverted dropout
/// (`0` or `1 / (1 - rate)`).
#[derive(Debug, Clone, Default)]
pub struct DropoutMasks {
    /// Over the `k d_e` pre-pooling product.
    pub input: Option<Vec<f64>>,
    /// Over the pooled `d_e` vector.
    pub hidden: Option<Vec<f64>>,
}

pub fn fuse(
    variant: Variant,
    inputs: FusionInputs<'_>,
    params: &ModelParams,
    k: usize,
    masks: DropoutMasks,
) -> Result<FusedQuery> {
    if variant == Variant::Ftp && k != 1 {
        return Err(Error::Config(format!("ftp requires k = 1, got k = {k}")));
    }
    let xs = matvec_t(&params.u, inputs.e_s)?.into_vec();
    let (y, relation) = match variant {
        Variant::LowFer => (
            matvec_t(&params.v, inputs.e_p)?.into_vec(),
            RelationPath::Direct {
                e_p: inputs.e_p.to_vec(),
            },
        ),
        Variant::T | Variant::Tnt => {
            let e_t = required_input(inputs.e_t, "e_t", variant)?;
            let mut m = hadamard(inputs.e_p, e_t)?.into_vec();
            let with_static = variant == Variant::Tnt;
            if with_static {
                let e_ps = required_input(inputs.e_p_static, "e_p_static", variant)?;
                if e_ps.len() != m.len() {
                    return Err(Error::DimensionMismatch {
                        op: "fuse_tnt (static relation)",
                        expected: m.len(),
                        actual: e_ps.len(),
                    });
                }
                m.iter_mut().zip(e_ps).for_each(|(x, s)| *x += s);
            }
            let y = matvec_t(&params.v, &m)?.into_vec();
            (
                y,
                RelationPath::Modulated {
                    e_p: inputs.e_p.to_vec(),
                    e_t: e_t.to_vec(),
                    m,
                    with_static,
                },
            )
        }
        Variant::Cfb | Variant::Ftp => {
            let e_t = required_input(inputs.e_t, "e_t", variant)?;
            let q = required(params.q.as_ref(), "q", variant)?;
            let a = matvec_t(&params.v, inputs.e_p)?.into_vec();
            let b = matvec_t(q, e_t)?.into_vec();
            let h = hadamard(&a, &b)?.into_vec();
            let chained = variant == Variant::Cfb;
            let y = if chained {
                matvec_t(required(params.r_mid.as_ref(), "r_mid", variant)?, &h)?.into_vec()
            } else {
                h.clone()
            };
            (
                y,
                RelationPath::Projected {
                    e_p: inputs.e_p.to_vec(),
                    e_t: e_t.to_vec(),
                    a,
                    b,
                    h,
                    chained,
                },
            )
        }
    };

    let mut z = hadamard(&xs, &y)?.into_vec();
    if let Some(mask) = &masks.input {
        if mask.len() != z.len() {
            return Err(Error::DimensionMismatch {
                op: "input dropout mask",
                expected: z.len(),
                actual: mask.len(),
            });
        }
        z.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
    }
    let mut g = sum_pool(&z, k)?.into_vec();
    if let Some(mask) = &masks.hidden {
        if mask.len() != g.len() {
            return Err(Error::DimensionMismatch {
                op: "hidden dropout mask",
                expected: g.len(),
                actual: mask.len(),
            });
        }
        g.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
    }
    Ok(FusedQuery {
        key: None,
        g: DenseVector::new(g),
        k,
        e_s: inputs.e_s.to_vec(),
        xs,
        y,
        relation,
        input_mask: masks.input,
        hidden_mask: masks.hidden,
    })
}

pub fn fuse_lowfer(e_s: &[f64], e_p: &[f64], params: &ModelParams, k: usize) -> Result<FusedQuery> {
    let inputs = FusionInputs {
        e_s,
        e_p,
        e_p_static: None,
        e_t: None,
    };
    fuse(Variant::LowFer, inputs, params, k, DropoutMasks::default())
}

pub fn fuse_t(e_s: &[f64], e_p: &[f64], e_t: &[f64], params: &ModelParams, k: usize) -> Result<FusedQuery> {
    let inputs = FusionInputs {
        e_s,
        e_p,
        e_p_static: None,
        e_t: Some(e_t),
    };
    fuse(Variant::T, inputs, params, k, DropoutMasks::default())
}

pub fn fuse_tnt(
    e_s: &[f64],
    e_p_t: &[f64],
    e_p_static: &[f64],
    e_t: &[f64],
    params: &ModelParams,
    k: usize,
) -> Result<FusedQuery> {
    let inputs = FusionInputs {
        e_s,
        e_p: e_p_t,
        e_p_static: Some(e_p_static),
        e_t: Some(e_t),
    };
    fuse(Variant::Tnt, inputs, params, k, DropoutMasks::default())
}

pub fn fuse_cfb(e_s: &[f64], e_p: &[f64], e_t: &[f64], params: &ModelParams, k: usize) -> Result<FusedQuery> {
    let inputs = FusionInputs {
        e_s,
        e_p,
        e_p_static: None,
        e_t: Some(e_t),
    };
    fuse(Variant::Cfb, inputs, params, k, DropoutMasks::default())
}

pub fn fuse_ftp(e_s: &[f64], e_p: &[f64], e_t: &[f64], params: &ModelParams) -> Result<FusedQuery> {
    let inputs = FusionInputs {
        e_s,
        e_p,
        e_p_static: None,
        e_t: Some(e_t),
    };
    fuse(Variant::Ftp, inputs, params, 1, DropoutMasks::default())
}

/// `logits[o] = <g, entity[o]>`.
pub fn score_all(q: &FusedQuery, entity: &DenseMatrix) -> Result<DenseVector> {
    if q.g.dim() != entity.cols() {
        return Err(Error::DimensionMismatch {
            op: "score_all",
            expected: entity.cols(),
            actual: q.g.dim(),
        });
    }
    crate::tensor::matvec(entity, q.g.as_slice())
}

/// Back-propagates `grad_g` (the gradient w.r.t. the scored `g`) through one
/// fusion. Projection gradients are added into `grads`; input gradients are
/// returned for the caller to route to embedding rows.
pub fn backward_fusion(
    fused: &FusedQuery,
    grad_g: &[f64],
    params: &ModelParams,
    grads: &mut ModelParams,
) -> Result<FusionGrads> {
    if grad_g.len() != fused.g.dim() {
        return Err(Error::DimensionMismatch {
            op: "backward_fusion",
            expected: fused.g.dim(),
            actual: grad_g.len(),
        });
    }
    let mut dg = grad_g.to_vec();
    if let Some(mask) = &fused.hidden_mask {
        dg.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }
    let mut dz = sum_pool_adjoint(&dg, fused.k)?.into_vec();
    if let Some(mask) = &fused.input_mask {
        dz.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }
    let dxs = hadamard(&dz, &fused.y)?.into_vec();
    let dy = hadamard(&dz, &fused.xs)?.into_vec();

    grads.u.add_outer(&fused.e_s, &dxs)?;
    let d_e_s = matvec(&params.u, &dxs)?.into_vec();

    let mut out = FusionGrads {
        e_s: d_e_s,
        e_p: Vec::new(),
        e_p_static: None,
        e_t: None,
    };
    match &fused.relation {
        RelationPath::Direct { e_p } => {
            grads.v.add_outer(e_p, &dy)?;
            out.e_p = matvec(&params.v, &dy)?.into_vec();
        }
        RelationPath::Modulated {
            e_p,
            e_t,
            m,
            with_static,
        } => {
            grads.v.add_outer(m, &dy)?;
            let dm = matvec(&params.v, &dy)?.into_vec();
            out.e_p = hadamard(&dm, e_t)?.into_vec();
            out.e_t = Some(hadamard(&dm, e_p)?.into_vec());
            if *with_static {
                out.e_p_static = Some(dm);
            }
        }
        RelationPath::Projected {
            e_p,
            e_t,
            a,
            b,
            h,
            chained,
        } => {
            let dh = if *chained {
                let r_mid = params
                    .r_mid
                    .as_ref()
                    .ok_or_else(|| Error::Config("cfb backward needs r_mid".into()))?;
                grads
                    .r_mid
                    .as_mut()
                    .ok_or_else(|| Error::Config("gradient buffer lacks r_mid".into()))?
                    .add_outer(h, &dy)?;
                matvec(r_mid, &dy)?.into_vec()
            } else {
                dy
            };
            let da = hadamard(&dh, b)?.into_vec();
            let db = hadamard(&dh, a)?.into_vec();
            let q = params
                .q
                .as_ref()
                .ok_or_else(|| Error::Config("backward needs projection q".into()))?;
            grads.v.add_outer(e_p, &da)?;
            grads
                .q
                .as_mut()
                .ok_or_else(|| Error::Config("gradient buffer lacks q".into()))?
                .add_outer(e_t, &db)?;
            out.e_p = matvec(&params.v, &da)?.into_vec();
            out.e_t = Some(matvec(q, &db)?.into_vec());
        }
    }
    Ok(out)
}

/// A complete model: layout, parameters and the timestamp encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub shape: ModelShape,
    pub params: ModelParams,
    pub time_encoder: Option<TimeEncoder>,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(shape: ModelShape, time_encoder: Option<TimeEncoder>, rng: &mut R) -> Result<Self> {
        let time_encoder = if shape.variant.uses_time() { time_encoder } else { None };
        let params = ModelParams::init(&shape, time_encoder.as_ref(), rng)?;
        Ok(Self {
            shape,
            params,
            time_encoder,
        })
    }

    pub fn from_params(shape: ModelShape, params: ModelParams, time_encoder: Option<TimeEncoder>) -> Result<Self> {
        let time_encoder = if shape.variant.uses_time() { time_encoder } else { None };
        let expected = ModelParams::zeros(&shape, time_encoder.as_ref())?;
        let got = params.tensors();
        let want = expected.tensors();
        if got.len() != want.len() {
            return Err(Error::CheckpointShape {
                name: "<all>".into(),
                message: format!("expected {} tensors, found {}", want.len(), got.len()),
            });
        }
        for ((gn, gm), (wn, wm)) in got.iter().zip(&want) {
            if gn != wn || gm.shape() != wm.shape() {
                return Err(Error::CheckpointShape {
                    name: wn.clone(),
                    message: format!("expected {wn} {:?}, found {gn} {:?}", wm.shape(), gm.shape()),
                });
            }
        }
        Ok(Self {
            shape,
            params,
            time_encoder,
        })
    }

    pub fn variant(&self) -> Variant {
        self.shape.variant
    }

    pub fn num_entities(&self) -> usize {
        self.shape.num_entities
    }

    fn time_embedding(&self, t: usize) -> Result<Option<DenseVector>> {
        match (&self.time_encoder, &self.params.time) {
            (Some(enc), Some(tables)) => Ok(Some(enc.encode(t, tables)?)),
            _ if self.shape.variant.uses_time() => {
                Err(Error::Config(format!("{} model has no time encoder", self.shape.variant)))
            }
            _ => Ok(None),
        }
    }

    /// Fuses one query; `masks` carries dropout masks in training mode.
    pub fn forward(&self, key: QueryKey, masks: DropoutMasks) -> Result<FusedQuery> {
        let p = &self.params;
        let e_s = p.entity.checked_row(key.s, "entity")?;
        let e_p = p.relation.checked_row(key.p, "relation")?;
        let e_p_static = match &p.static_relation {
            Some(m) => Some(m.checked_row(key.p, "static relation")?),
            None => None,
        };
        let e_t = self.time_embedding(key.t)?;
        let inputs = FusionInputs {
            e_s,
            e_p,
            e_p_static,
            e_t: e_t.as_ref().map(DenseVector::as_slice),
        };
        let mut fused = fuse(self.shape.variant, inputs, p, self.shape.k, masks)?;
        fused.key = Some(key);
        Ok(fused)
    }

    pub fn score(&self, fused: &FusedQuery) -> Result<DenseVector> {
        score_all(fused, &self.params.entity)
    }

    /// Dropout-free 1-N scores of one query.
    pub fn score_query(&self, key: QueryKey) -> Result<DenseVector> {
        self.score(&self.forward(key, DropoutMasks::default())?)
    }

    /// Accumulates parameter gradients for a batch given `dlogits`
    /// (one `|E|`-row per fused query). Rows are reduced in batch order.
    pub fn backward(&self, batch: &[FusedQuery], dlogits: &DenseMatrix, grads: &mut ModelParams) -> Result<()> {
        if dlogits.rows() != batch.len() {
            return Err(Error::DimensionMismatch {
                op: "backward (batch rows)",
                expected: batch.len(),
                actual: dlogits.rows(),
            });
        }
        if dlogits.cols() != self.num_entities() {
            return Err(Error::DimensionMismatch {
                op: "backward (candidates)",
                expected: self.num_entities(),
                actual: dlogits.cols(),
            });
        }
        for (i, fused) in batch.iter().enumerate() {
            let key = fused
                .key
                .ok_or_else(|| Error::Config("fused query has no key; was it produced by Model::forward?".into()))?;
            let dl = dlogits.row(i);
            // Candidate side.
            grads.entity.add_outer(dl, fused.g.as_slice())?;
            let grad_g = matvec_t(&self.params.entity, dl)?;
            let fg = backward_fusion(fused, grad_g.as_slice(), &self.params, grads)?;
            // Query side.
            grads.entity.add_to_row(key.s, &fg.e_s)?;
            grads.relation.add_to_row(key.p, &fg.e_p)?;
            if let (Some(d), Some(buf)) = (&fg.e_p_static, grads.static_relation.as_mut()) {
                buf.add_to_row(key.p, d)?;
            }
            if let Some(d) = &fg.e_t {
                let enc = self
                    .time_encoder
                    .as_ref()
                    .ok_or_else(|| Error::Config("time gradient without encoder".into()))?;
                let buf = grads
                    .time
                    .as_mut()
                    .ok_or_else(|| Error::Config("gradient buffer lacks time tables".into()))?;
                enc.accumulate_grad(key.t, d, buf)?;
            }
        }
        Ok(())
    }
}
