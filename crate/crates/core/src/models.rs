//! Latent-model building blocks.
//!
//! A latent model is an ordered sum of mutually independent components
//! ("blocks"). Time-series blocks are white noise, quantization noise, a
//! deterministic drift, a random walk, MA(1) and AR(1) processes; spatial
//! blocks are exponential and Gaussian covariance models. This module
//! validates compositions, normalizes block order, classifies a model against
//! the families whose parameters are known to be identifiable from second-order
//! moments, and maps parameter vectors to and from an unconstrained space.
//!
//! The canonical block order is WN, QN, Drift, RW, MA1, then AR1 blocks by
//! increasing `rho`. Spatial blocks are ordered by increasing `phi`. The
//! packed parameter vector follows that order, each block contributing its
//! parameters in the order listed by [`BlockKind::param_names`].

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    WhiteNoise,
    Quantization,
    Drift,
    RandomWalk,
    Ma1,
    Ar1,
    SpatialExp,
    SpatialGauss,
}

impl BlockKind {
    pub const ALL: [BlockKind; 8] = [
        BlockKind::WhiteNoise,
        BlockKind::Quantization,
        BlockKind::Drift,
        BlockKind::RandomWalk,
        BlockKind::Ma1,
        BlockKind::Ar1,
        BlockKind::SpatialExp,
        BlockKind::SpatialGauss,
    ];

    /// Short name used in the model text format.
    pub fn label(self) -> &'static str {
        match self {
            BlockKind::WhiteNoise => "WN",
            BlockKind::Quantization => "QN",
            BlockKind::Drift => "Drift",
            BlockKind::RandomWalk => "RW",
            BlockKind::Ma1 => "MA1",
            BlockKind::Ar1 => "AR1",
            BlockKind::SpatialExp => "SpatialExp",
            BlockKind::SpatialGauss => "SpatialGauss",
        }
    }

    pub fn from_label(label: &str) -> Option<BlockKind> {
        BlockKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(label))
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            BlockKind::WhiteNoise => &["sigma2"],
            BlockKind::Quantization => &["q2"],
            BlockKind::Drift => &["omega"],
            BlockKind::RandomWalk => &["gamma2"],
            BlockKind::Ma1 => &["rho_ma", "zeta2"],
            BlockKind::Ar1 => &["rho", "nu2"],
            BlockKind::SpatialExp | BlockKind::SpatialGauss => &["phi", "sigma2"],
        }
    }

    pub fn param_bounds(self) -> &'static [Bound] {
        match self {
            BlockKind::Ma1 => &[Bound::OpenUnit, Bound::Positive],
            BlockKind::Ar1 => &[Bound::OpenUnitNonZero, Bound::Positive],
            BlockKind::SpatialExp | BlockKind::SpatialGauss => &[Bound::Positive, Bound::Positive],
            _ => &[Bound::Positive],
        }
    }

    pub fn arity(self) -> usize {
        self.param_names().len()
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, BlockKind::SpatialExp | BlockKind::SpatialGauss)
    }

    /// Second-order stationary time-series block (WN, QN, MA1, AR1).
    pub fn is_stationary(self) -> bool {
        matches!(
            self,
            BlockKind::WhiteNoise | BlockKind::Quantization | BlockKind::Ma1 | BlockKind::Ar1
        )
    }

    /// Kinds that may appear at most once in a model.
    pub fn is_singleton(self) -> bool {
        matches!(
            self,
            BlockKind::WhiteNoise | BlockKind::Quantization | BlockKind::Drift | BlockKind::RandomWalk | BlockKind::Ma1
        )
    }

    /// Exponent `c` of the spatial covariance `sigma2 * exp(-(d/phi)^c)`.
    pub fn spatial_power(self) -> Option<i32> {
        match self {
            BlockKind::SpatialExp => Some(1),
            BlockKind::SpatialGauss => Some(2),
            _ => None,
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Admissible range of a single parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    /// `(0, inf)`, mapped through `ln`.
    Positive,
    /// `(-1, 1)`, mapped through `atanh`.
    OpenUnit,
    /// `(-1, 1) \ {0}`, mapped through `atanh`.
    OpenUnitNonZero,
}

impl Bound {
    pub fn contains(self, value: f64) -> bool {
        if !value.is_finite() {
            return false;
        }
        match self {
            Bound::Positive => value > 0.0,
            Bound::OpenUnit => value > -1.0 && value < 1.0,
            Bound::OpenUnitNonZero => value > -1.0 && value < 1.0 && value != 0.0,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Bound::Positive => "(0, inf)",
            Bound::OpenUnit => "(-1, 1)",
            Bound::OpenUnitNonZero => "(-1, 1) without 0",
        }
    }

    pub fn to_unconstrained(self, value: f64) -> f64 {
        match self {
            Bound::Positive => value.ln(),
            Bound::OpenUnit | Bound::OpenUnitNonZero => value.atanh(),
        }
    }

    pub fn from_unconstrained(self, u: f64) -> f64 {
        match self {
            Bound::Positive => u.exp(),
            Bound::OpenUnit | Bound::OpenUnitNonZero => u.tanh(),
        }
    }
}

/// One latent component: a kind and its parameter values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSpec {
    kind: BlockKind,
    values: [f64; 2],
}

impl BlockSpec {
    pub fn new(kind: BlockKind, params: &[f64]) -> Result<BlockSpec> {
        if params.len() != kind.arity() {
            return Err(Error::ParamLength {
                expected: kind.arity(),
                got: params.len(),
            });
        }
        let mut values = [0.0; 2];
        values[..params.len()].copy_from_slice(params);
        Ok(BlockSpec { kind, values })
    }

    fn raw(kind: BlockKind, a: f64, b: f64) -> BlockSpec {
        BlockSpec { kind, values: [a, b] }
    }

    pub fn white_noise(sigma2: f64) -> BlockSpec {
        BlockSpec::raw(BlockKind::WhiteNoise, sigma2, 0.0)
    }

    pub fn quantization(q2: f64) -> BlockSpec {
        BlockSpec::raw(BlockKind::Quantization, q2, 0.0)
    }

    pub fn drift(omega: f64) -> BlockSpec {
        BlockSpec::raw(BlockKind::Drift, omega, 0.0)
    }

    pub fn random_walk(gamma2: f64) -> BlockSpec {
        BlockSpec::raw(BlockKind::RandomWalk, gamma2, 0.0)
    }

    pub fn ma1(rho_ma: f64, zeta2: f64) -> BlockSpec {
        BlockSpec::raw(BlockKind::Ma1, rho_ma, zeta2)
    }

    pub fn ar1(rho: f64, nu2: f64) -> BlockSpec {
        BlockSpec::raw(BlockKind::Ar1, rho, nu2)
    }

    pub fn spatial_exp(phi: f64, sigma2: f64) -> BlockSpec {
        BlockSpec::raw(BlockKind::SpatialExp, phi, sigma2)
    }

    pub fn spatial_gauss(phi: f64, sigma2: f64) -> BlockSpec {
        BlockSpec::raw(BlockKind::SpatialGauss, phi, sigma2)
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.values[..self.kind.arity()]
    }

    pub fn validate(&self) -> Result<()> {
        for ((name, bound), &value) in self
            .kind
            .param_names()
            .iter()
            .zip(self.kind.param_bounds())
            .zip(self.params())
        {
            if !bound.contains(value) {
                return Err(Error::ParamOutOfRange {
                    name: format!("{}.{}", self.kind, name),
                    value,
                    range: bound.describe(),
                });
            }
        }
        Ok(())
    }

    /// Value that orders blocks of the same kind (rho for AR1, phi for spatial).
    fn order_key(&self) -> f64 {
        match self.kind {
            BlockKind::Ar1 | BlockKind::SpatialExp | BlockKind::SpatialGauss => self.values[0],
            _ => 0.0,
        }
    }
}

impl fmt::Display for BlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        for (name, value) in self.kind.param_names().iter().zip(self.params()) {
            write!(f, " {name}={value}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    TimeSeries,
    Spatial,
}

/// Position of one scalar parameter in the packed vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub block: usize,
    pub name: &'static str,
    pub bound: Bound,
    /// Unique human-readable name, e.g. `AR1[2].rho` or `WN.sigma2`.
    pub label: String,
}

/// Validated, canonically ordered sum of independent blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    blocks: Vec<BlockSpec>,
    source_index: Vec<usize>,
    domain: Domain,
    layout: Vec<ParamSpec>,
    offsets: Vec<usize>,
}

/// Validates `blocks` and returns the canonically ordered model.
pub fn build_model(blocks: &[BlockSpec]) -> Result<LatentModel> {
    if blocks.is_empty() {
        return Err(Error::EmptyModel);
    }
    for block in blocks {
        block.validate()?;
    }

    let spatial = blocks.iter().filter(|b| b.kind.is_spatial()).count();
    let domain = match spatial {
        0 => Domain::TimeSeries,
        s if s == blocks.len() => Domain::Spatial,
        _ => return Err(Error::MixedDomain),
    };
    if domain == Domain::Spatial && blocks.iter().any(|b| b.kind != blocks[0].kind) {
        return Err(Error::HeterogeneousSpatial);
    }

    let mut order: Vec<usize> = (0..blocks.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&blocks[a], &blocks[b]);
        x.kind.cmp(&y.kind).then(x.order_key().total_cmp(&y.order_key()))
    });
    let sorted: Vec<BlockSpec> = order.iter().map(|&i| blocks[i]).collect();

    for pair in sorted.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.kind != b.kind {
            continue;
        }
        if a.kind.is_singleton() {
            return Err(Error::DuplicateSingletonBlock(a.kind));
        }
        if a.order_key() == b.order_key() {
            return Err(match a.kind {
                BlockKind::Ar1 => Error::DuplicateRho(a.order_key()),
                _ => Error::DuplicatePhi(a.order_key()),
            });
        }
    }

    let mut layout = Vec::new();
    let mut offsets = Vec::with_capacity(sorted.len());
    let mut repeat: BTreeMap<BlockKind, usize> = BTreeMap::new();
    let counts = sorted.iter().fold(BTreeMap::new(), |mut m, b| {
        *m.entry(b.kind).or_insert(0usize) += 1;
        m
    });
    for (index, block) in sorted.iter().enumerate() {
        offsets.push(layout.len());
        let seen = repeat.entry(block.kind).or_insert(0);
        *seen += 1;
        let prefix = if counts[&block.kind] > 1 || block.kind == BlockKind::Ar1 {
            format!("{}[{}]", block.kind, seen)
        } else {
            block.kind.to_string()
        };
        for (name, bound) in block.kind.param_names().iter().zip(block.kind.param_bounds()) {
            layout.push(ParamSpec {
                block: index,
                name,
                bound: *bound,
                label: format!("{prefix}.{name}"),
            });
        }
    }

    Ok(LatentModel {
        blocks: sorted,
        source_index: order,
        domain,
        layout,
        offsets,
    })
}

impl LatentModel {
    pub fn build(blocks: &[BlockSpec]) -> Result<LatentModel> {
        build_model(blocks)
    }

    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    /// Index in the caller's original block list of each canonical block.
    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn layout(&self) -> &[ParamSpec] {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    pub fn param_labels(&self) -> Vec<String> {
        self.layout.iter().map(|p| p.label.clone()).collect()
    }

    /// Packed parameter vector of the model's own block values.
    pub fn theta(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.params().iter().copied()).collect()
    }

    pub fn kinds(&self) -> impl Iterator<Item = BlockKind> + '_ {
        self.blocks.iter().map(|b| b.kind)
    }

    pub fn count(&self, kind: BlockKind) -> usize {
        self.kinds().filter(|&k| k == kind).count()
    }

    pub fn has(&self, kind: BlockKind) -> bool {
        self.kinds().any(|k| k == kind)
    }

    /// Offset of block `index` inside the packed parameter vector.
    pub fn offset(&self, index: usize) -> usize {
        self.offsets[index]
    }

    /// Pairs each block kind with its slice of `theta`. The slice values are
    /// not checked against bounds or ordering, so moment code can be
    /// evaluated at arbitrary points (finite-difference stencils, tie cases).
    pub fn components<'a>(&'a self, theta: &'a [f64]) -> impl Iterator<Item = (BlockKind, &'a [f64])> + 'a {
        self.blocks.iter().zip(&self.offsets).map(move |(b, &off)| {
            let kind = b.kind;
            (kind, &theta[off..off + kind.arity()])
        })
    }

    pub fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::ParamLength {
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Length and per-parameter bound check (no ordering requirement).
    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        self.check_len(theta)?;
        for (spec, &value) in self.layout.iter().zip(theta) {
            if !spec.bound.contains(value) {
                return Err(Error::ParamOutOfRange {
                    name: spec.label.clone(),
                    value,
                    range: spec.bound.describe(),
                });
            }
        }
        Ok(())
    }

    /// Rebuilds the model with new parameter values (re-validated and
    /// re-sorted).
    pub fn with_theta(&self, theta: &[f64]) -> Result<LatentModel> {
        self.check_len(theta)?;
        let blocks = self
            .components(theta)
            .map(|(kind, p)| BlockSpec::new(kind, p))
            .collect::<Result<Vec<_>>>()?;
        build_model(&blocks)
    }

    pub fn classify(&self) -> IdentClass {
        classify_model(self)
    }

    /// Model text format: one block per line.
    pub fn to_text(&self) -> String {
        self.blocks.iter().map(|b| format!("{b}\n")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IdentLabel {
    /// WN and/or QN plus K AR1 blocks.
    Model1,
    /// MA1 plus K AR1 blocks.
    Model2,
    /// Homogeneous sum of spatial blocks.
    Model3,
    /// K >= 2 AR1 blocks only.
    Model4,
    /// Subset of {WN, QN, Drift, RW}.
    Model5,
    /// Subset of {Drift, RW, MA1}.
    Model6,
    UnprovenCaution,
    NonComposite,
}

impl fmt::Display for IdentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IdentLabel::Model1 => "Model1",
            IdentLabel::Model2 => "Model2",
            IdentLabel::Model3 => "Model3",
            IdentLabel::Model4 => "Model4",
            IdentLabel::Model5 => "Model5",
            IdentLabel::Model6 => "Model6",
            IdentLabel::UnprovenCaution => "UnprovenCaution",
            IdentLabel::NonComposite => "NonComposite",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentClass {
    pub label: IdentLabel,
    pub notes: String,
}

impl IdentClass {
    fn new(label: IdentLabel, notes: impl Into<String>) -> IdentClass {
        IdentClass {
            label,
            notes: notes.into(),
        }
    }

    /// True when the label carries a machine-readable warning.
    pub fn is_caution(&self) -> bool {
        self.label == IdentLabel::UnprovenCaution
    }
}

/// Classifies a model from the multiset of its block kinds.
pub fn classify_model(model: &LatentModel) -> IdentClass {
    use BlockKind::*;
    use IdentLabel::*;

    if model.blocks.len() == 1 {
        return IdentClass::new(NonComposite, "single block");
    }
    if model.domain == Domain::Spatial {
        return IdentClass::new(Model3, "homogeneous spatial sum");
    }

    let has = |k| model.has(k);
    let only = |allowed: &[BlockKind]| model.kinds().all(|k| allowed.contains(&k));
    let ar = model.count(Ar1);

    if has(Ma1) && (has(WhiteNoise) || has(Quantization)) {
        return IdentClass::new(
            UnprovenCaution,
            "MA1 combined with WN and/or QN: moment Jacobian not known to be full rank",
        );
    }
    if ar == model.blocks.len() {
        return IdentClass::new(Model4, format!("{ar} AR1 blocks"));
    }
    if ar > 0 && only(&[WhiteNoise, Quantization, Ar1]) {
        let notes = if has(WhiteNoise) && has(Quantization) {
            String::new()
        } else {
            "sub-model: column subset of the WN + QN + AR1 family".to_string()
        };
        return IdentClass::new(Model1, notes);
    }
    if ar > 0 && only(&[Ma1, Ar1]) {
        return IdentClass::new(Model2, "");
    }
    if only(&[WhiteNoise, Quantization, Drift, RandomWalk]) {
        let full = [WhiteNoise, Quantization, Drift, RandomWalk].iter().all(|&k| has(k));
        let notes = if full {
            ""
        } else {
            "sub-model: column subset of the WN + QN + Drift + RW family"
        };
        return IdentClass::new(Model5, notes);
    }
    if only(&[Drift, RandomWalk, Ma1]) {
        let full = has(Drift) && has(RandomWalk) && has(Ma1);
        let notes = if full {
            ""
        } else {
            "sub-model: column subset of the Drift + RW + MA1 family"
        };
        return IdentClass::new(Model6, notes);
    }
    let kinds: Vec<String> = model.kinds().map(|k| k.to_string()).collect();
    IdentClass::new(
        UnprovenCaution,
        format!(
            "composition {{{}}} is outside the families with known identifiability",
            kinds.join(", ")
        ),
    )
}

/// Maps a bounded parameter vector to `R^p` (log for positive parameters,
/// atanh for coefficients in (-1, 1)).
pub fn to_unconstrained(model: &LatentModel, theta: &[f64]) -> Result<Vec<f64>> {
    model.check_theta(theta)?;
    Ok(model
        .layout
        .iter()
        .zip(theta)
        .map(|(spec, &v)| spec.bound.to_unconstrained(v))
        .collect())
}

/// Inverse of [`to_unconstrained`]. Extreme inputs saturate to the
/// boundary (e.g. `tanh(40) == 1.0`); callers evaluating moments there get
/// non-finite values.
pub fn from_unconstrained(model: &LatentModel, u: &[f64]) -> Vec<f64> {
    model
        .layout
        .iter()
        .zip(u)
        .map(|(spec, &x)| spec.bound.from_unconstrained(x))
        .collect()
}

/// Parses the model text format: one block per line, `KIND key=value ...`.
/// Blank lines and `#` comments are ignored; spaces around `=` are allowed.
pub fn parse_blocks(text: &str) -> Result<Vec<BlockSpec>> {
    let mut blocks = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        blocks.push(parse_block_line(line).map_err(|message| Error::Parse {
            line: lineno + 1,
            message,
        })?);
    }
    Ok(blocks)
}

pub fn parse_model(text: &str) -> Result<LatentModel> {
    build_model(&parse_blocks(text)?)
}

fn parse_block_line(line: &str) -> std::result::Result<BlockSpec, String> {
    let line = squeeze_equals(line);
    let mut tokens = line.split_whitespace();
    let head = tokens.next().ok_or("missing block kind")?;
    let kind = BlockKind::from_label(head).ok_or_else(|| format!("unknown block kind `{head}`"))?;
    let names = kind.param_names();
    let mut values: [Option<f64>; 2] = [None, None];
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{token}`"))?;
        let slot = names
            .iter()
            .position(|n| *n == key)
            .ok_or_else(|| format!("unknown key `{key}` for {kind}"))?;
        if values[slot].is_some() {
            return Err(format!("duplicate key `{key}`"));
        }
        let parsed: f64 = value
            .parse()
            .map_err(|_| format!("invalid number `{value}` for `{key}`"))?;
        values[slot] = Some(parsed);
    }
    let mut params = Vec::with_capacity(names.len());
    for (slot, name) in names.iter().enumerate() {
        params.push(values[slot].ok_or_else(|| format!("missing key `{name}` for {kind}"))?);
    }
    BlockSpec::new(kind, &params).map_err(|e| e.to_string())
}

/// Removes whitespace adjacent to `=` so `rho = 0.9` reads as `rho=0.9`.
fn squeeze_equals(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut pending_space = false;
    for ch in line.chars() {
        if ch.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space && ch != '=' && !out.ends_with('=') && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(ch);
    }
    out
}
