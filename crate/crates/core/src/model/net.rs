//! Network wiring: attention-gated U-Net backbone, uncertainty-aware branches
//! and the intersection-union constraining module.

use super::config::{FilterKind, NetConfig};
use super::state::{Init, NetState, ParamId, Registrar};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{invalid, Error, Result};
use crate::maskops::{compose_mcm, MultiConfidenceMask};

#[derive(Clone, Debug)]
struct ConvP {
    w: ParamId,
    b: Option<ParamId>,
}

impl ConvP {
    fn new(reg: &mut dyn Registrar, name: &str, cin: usize, cout: usize, k: usize, bias: bool) -> Self {
        let w = reg.param(format!("{name}.weight"), &[cout, cin, k, k], Init::FanIn(cin * k * k));
        let b = bias.then(|| reg.param(format!("{name}.bias"), &[cout], Init::Zeros));
        Self { w, b }
    }

    fn apply(&self, t: &mut Tape, x: Var) -> Var {
        t.conv(x, self.w, self.b)
    }
}

#[derive(Clone, Debug)]
struct NormP {
    gamma: ParamId,
    beta: ParamId,
}

impl NormP {
    fn new(reg: &mut dyn Registrar, name: &str, c: usize) -> Self {
        Self {
            gamma: reg.param(format!("{name}.gamma"), &[c], Init::Ones),
            beta: reg.param(format!("{name}.beta"), &[c], Init::Zeros),
        }
    }

    fn apply(&self, t: &mut Tape, x: Var) -> Var {
        t.instance_norm(x, self.gamma, self.beta)
    }
}

/// 3×3 conv, normalization, rectifier.
#[derive(Clone, Debug)]
struct ConvUnit {
    conv: ConvP,
    norm: NormP,
}

impl ConvUnit {
    fn new(reg: &mut dyn Registrar, conv: &str, norm: &str, cin: usize, cout: usize) -> Self {
        Self {
            conv: ConvP::new(reg, conv, cin, cout, 3, false),
            norm: NormP::new(reg, norm, cout),
        }
    }

    fn apply(&self, t: &mut Tape, x: Var) -> Var {
        let y = self.conv.apply(t, x);
        let y = self.norm.apply(t, y);
        t.relu(y)
    }
}

#[derive(Clone, Debug)]
struct ConvBlock {
    first: ConvUnit,
    second: ConvUnit,
}

impl ConvBlock {
    fn new(reg: &mut dyn Registrar, name: &str, cin: usize, cout: usize) -> Self {
        Self {
            first: ConvUnit::new(reg, &format!("{name}.conv1"), &format!("{name}.norm1"), cin, cout),
            second: ConvUnit::new(reg, &format!("{name}.conv2"), &format!("{name}.norm2"), cout, cout),
        }
    }

    fn apply(&self, t: &mut Tape, x: Var) -> Var {
        let y = self.first.apply(t, x);
        self.second.apply(t, y)
    }
}

/// Additive attention gate on a skip connection.
#[derive(Clone, Debug)]
struct AttGate {
    wg: ConvP,
    ng: NormP,
    wx: ConvP,
    nx: NormP,
    psi: ConvP,
    npsi: NormP,
}

impl AttGate {
    fn new(reg: &mut dyn Registrar, name: &str, c: usize) -> Self {
        let f_int = (c / 2).max(1);
        Self {
            wg: ConvP::new(reg, &format!("{name}.wg"), c, f_int, 1, false),
            ng: NormP::new(reg, &format!("{name}.ng"), f_int),
            wx: ConvP::new(reg, &format!("{name}.wx"), c, f_int, 1, false),
            nx: NormP::new(reg, &format!("{name}.nx"), f_int),
            psi: ConvP::new(reg, &format!("{name}.psi"), f_int, 1, 1, false),
            npsi: NormP::new(reg, &format!("{name}.npsi"), 1),
        }
    }

    fn apply(&self, t: &mut Tape, gating: Var, skip: Var) -> Var {
        let g = self.wg.apply(t, gating);
        let g = self.ng.apply(t, g);
        let x = self.wx.apply(t, skip);
        let x = self.nx.apply(t, x);
        let s = t.add(g, x);
        let s = t.relu(s);
        let p = self.psi.apply(t, s);
        let p = self.npsi.apply(t, p);
        let p = t.sigmoid(p);
        t.gate_mul(skip, p)
    }
}

#[derive(Clone, Debug)]
struct DecoderLevel {
    up: ConvUnit,
    gate: Option<AttGate>,
    block: ConvBlock,
}

#[derive(Clone, Debug)]
struct Fem {
    encoders: Vec<ConvBlock>,
    /// Ordered from the deepest level upwards.
    decoders: Vec<DecoderLevel>,
    out: ConvP,
}

impl Fem {
    fn new(reg: &mut dyn Registrar, cfg: &NetConfig) -> Self {
        let mut encoders = Vec::with_capacity(cfg.depth + 1);
        let mut cin = cfg.in_channels;
        for l in 0..=cfg.depth {
            let c = cfg.level_channels(l);
            encoders.push(ConvBlock::new(reg, &format!("fem.enc{l}"), cin, c));
            cin = c;
        }
        let mut decoders = Vec::with_capacity(cfg.depth);
        for l in (1..=cfg.depth).rev() {
            let (hi, lo) = (cfg.level_channels(l), cfg.level_channels(l - 1));
            let name = format!("fem.dec{}", l - 1);
            decoders.push(DecoderLevel {
                up: ConvUnit::new(reg, &format!("{name}.up.conv"), &format!("{name}.up.norm"), hi, lo),
                gate: cfg
                    .attention_gates
                    .then(|| AttGate::new(reg, &format!("{name}.gate"), lo)),
                block: ConvBlock::new(reg, &name, 2 * lo, lo),
            });
        }
        let out = ConvP::new(reg, "fem.out", cfg.base_channels, cfg.feature_channels, 1, true);
        Self {
            encoders,
            decoders,
            out,
        }
    }

    fn apply(&self, t: &mut Tape, image: Var) -> Var {
        let mut skips = Vec::with_capacity(self.encoders.len());
        let mut x = image;
        for (l, enc) in self.encoders.iter().enumerate() {
            if l > 0 {
                x = t.max_pool2(x);
            }
            x = enc.apply(t, x);
            skips.push(x);
        }
        skips.pop();
        for dec in &self.decoders {
            let skip = skips.pop().expect("one skip per decoder level");
            let up = t.upsample2(x);
            let up = dec.up.apply(t, up);
            let skip = match &dec.gate {
                Some(gate) => gate.apply(t, up, skip),
                None => skip,
            };
            let cat = t.concat(&[skip, up]);
            x = dec.block.apply(t, cat);
        }
        self.out.apply(t, x)
    }
}

/// 3×3 conv, rectifier, 3×3 conv to one channel, logistic.
#[derive(Clone, Debug)]
struct Head {
    hidden: ConvP,
    out: ConvP,
}

impl Head {
    fn new(reg: &mut dyn Registrar, name: &str, c: usize) -> Self {
        Self {
            hidden: ConvP::new(reg, &format!("{name}.conv1"), c, c, 3, true),
            out: ConvP::new(reg, &format!("{name}.conv2"), c, 1, 3, true),
        }
    }

    fn apply(&self, t: &mut Tape, x: Var) -> Var {
        let y = self.hidden.apply(t, x);
        let y = t.relu(y);
        let y = self.out.apply(t, y);
        t.sigmoid(y)
    }
}

#[derive(Clone, Debug)]
struct Uam {
    lc: ConvP,
    hc: ConvP,
    uni: ConvP,
    head_union: Head,
    head_inter: Head,
    head_uni: Head,
}

impl Uam {
    fn new(reg: &mut dyn Registrar, c: usize) -> Self {
        Self {
            lc: ConvP::new(reg, "uam.lc", c, c, 1, true),
            hc: ConvP::new(reg, "uam.hc", c, c, 1, true),
            uni: ConvP::new(reg, "uam.uni", c, c, 1, true),
            head_union: Head::new(reg, "uam.head_union", c),
            head_inter: Head::new(reg, "uam.head_inter", c),
            head_uni: Head::new(reg, "uam.head_uni", c),
        }
    }
}

#[derive(Clone, Debug)]
struct Faab {
    query: ConvP,
    key: ConvP,
    value: ConvP,
}

impl Faab {
    fn new(reg: &mut dyn Registrar, name: &str, c: usize, d: usize) -> Self {
        Self {
            query: ConvP::new(reg, &format!("{name}.query"), c, d, 1, true),
            key: ConvP::new(reg, &format!("{name}.key"), c, d, 1, true),
            value: ConvP::new(reg, &format!("{name}.value"), c, c, 1, true),
        }
    }

    fn apply(&self, t: &mut Tape, cfg: &NetConfig, filter: FilterKind, x: Var) -> Result<Var> {
        let q = self.query.apply(t, x);
        let k = self.key.apply(t, x);
        let v = self.value.apply(t, x);
        let a = t.attention(q, k, v);
        let f = match filter {
            FilterKind::Gabor => t.depthwise(a, cfg.gabor.mean_kernel(), cfg.gabor.kernel_size),
            FilterKind::Otsu => t.otsu_gate(a, cfg.otsu_bins)?,
        };
        Ok(t.add(x, f))
    }
}

#[derive(Clone, Debug)]
struct Iucm {
    uni: Faab,
    lc: Faab,
    hc: Faab,
    out: ConvP,
}

impl Iucm {
    fn new(reg: &mut dyn Registrar, c: usize, d: usize) -> Self {
        Self {
            uni: Faab::new(reg, "iucm.faab_uni", c, d),
            lc: Faab::new(reg, "iucm.faab_lc", c, d),
            hc: Faab::new(reg, "iucm.faab_hc", c, d),
            out: ConvP::new(reg, "iucm.out", 4 * c, 1, 3, true),
        }
    }

    fn faab(&self, branch: Branch) -> &Faab {
        match branch {
            Branch::Uni => &self.uni,
            Branch::Lc => &self.lc,
            Branch::Hc => &self.hc,
        }
    }
}

/// Parameter ids of every layer, built once per configuration.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    fem: Fem,
    uam: Option<Uam>,
    iucm: Option<Iucm>,
    /// Segmentation head on `R` when the constraining module is off.
    head_s: Option<Head>,
}

impl Layout {
    pub(crate) fn build(cfg: &NetConfig, reg: &mut dyn Registrar) -> Self {
        let c = cfg.feature_channels;
        let fem = Fem::new(reg, cfg);
        let toggles = cfg.branch_toggles;
        let uam = toggles.use_uam.then(|| Uam::new(reg, c));
        let iucm = (toggles.use_uam && toggles.use_iucm).then(|| Iucm::new(reg, c, cfg.attention_channels));
        let head_s = iucm.is_none().then(|| Head::new(reg, "head_s", c));
        Self {
            fem,
            uam,
            iucm,
            head_s,
        }
    }
}

/// Branch of the intersection-union constraining module.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Uni,
    Lc,
    Hc,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Uni, Branch::Lc, Branch::Hc];

    pub fn filter(self, cfg: &NetConfig) -> FilterKind {
        match self {
            Branch::Uni => cfg.filters.uni,
            Branch::Lc => cfg.filters.lc,
            Branch::Hc => cfg.filters.hc,
        }
    }
}

pub(crate) struct UamVars {
    pub r_lc: Var,
    pub r_hc: Var,
    pub r_uni: Var,
    pub union: Var,
    pub inter: Var,
    pub x_uni: Var,
}

pub(crate) struct IucmVars {
    /// `R′` per branch in [`Branch::ALL`] order.
    pub primes: [Var; 3],
    pub sims: [Var; 3],
}

pub(crate) struct Graph {
    pub r: Var,
    pub uam: Option<UamVars>,
    pub iucm: Option<IucmVars>,
    pub x_s: Var,
}

fn check_input(state: &NetState, image: &Tensor) -> Result<()> {
    let cfg = state.config();
    let want = (cfg.in_channels, cfg.input_size, cfg.input_size);
    if image.shape() != want {
        return Err(invalid!("image shape {:?}, network expects {want:?}", image.shape()));
    }
    if !image.is_finite() {
        return Err(invalid!("image contains non-finite values"));
    }
    state.check_finite()
}

fn check_features(state: &NetState, x: &Tensor, what: &str) -> Result<()> {
    let cfg = state.config();
    let want = (cfg.feature_channels, cfg.input_size, cfg.input_size);
    if x.shape() != want {
        return Err(invalid!("{what} shape {:?}, expected {want:?}", x.shape()));
    }
    if !x.is_finite() {
        return Err(invalid!("{what} contains non-finite values"));
    }
    state.check_finite()
}

fn uam_graph(t: &mut Tape, uam: &Uam, r: Var) -> UamVars {
    let r_lc = uam.lc.apply(t, r);
    let r_hc = uam.hc.apply(t, r);
    let r_uni = uam.uni.apply(t, r);
    UamVars {
        r_lc,
        r_hc,
        r_uni,
        union: uam.head_union.apply(t, r_lc),
        inter: uam.head_inter.apply(t, r_hc),
        x_uni: uam.head_uni.apply(t, r_uni),
    }
}

fn iucm_graph(t: &mut Tape, cfg: &NetConfig, iucm: &Iucm, r: Var, branches: [Var; 3]) -> Result<(IucmVars, Var)> {
    let mut primes = [r; 3];
    let mut sims = [r; 3];
    let mut scaled = Vec::with_capacity(4);
    scaled.push(r);
    for (i, branch) in Branch::ALL.into_iter().enumerate() {
        let p = iucm.faab(branch).apply(t, cfg, branch.filter(cfg), branches[i])?;
        let s = t.cosine(p, r);
        scaled.push(t.scale(p, s));
        primes[i] = p;
        sims[i] = s;
    }
    let fused = t.concat(&scaled);
    let logits = iucm.out.apply(t, fused);
    let x_s = t.sigmoid(logits);
    Ok((IucmVars { primes, sims }, x_s))
}

/// Records the full forward pass of one image on `t`.
pub(crate) fn build_graph(t: &mut Tape, state: &NetState, image: &Tensor) -> Result<Graph> {
    check_input(state, image)?;
    let cfg = state.config();
    let layout = &state.layout;
    let x = t.input(image.clone());
    let r = layout.fem.apply(t, x);
    let uam = layout.uam.as_ref().map(|u| uam_graph(t, u, r));
    let (iucm, x_s) = match (&layout.iucm, &uam) {
        (Some(iucm), Some(u)) => {
            let (vars, x_s) = iucm_graph(t, cfg, iucm, r, [u.r_uni, u.r_lc, u.r_hc])?;
            (Some(vars), x_s)
        }
        _ => {
            let head = layout.head_s.as_ref().expect("plain head without IUCM");
            (None, head.apply(t, r))
        }
    };
    Ok(Graph { r, uam, iucm, x_s })
}

#[derive(Clone, Debug, PartialEq)]
pub struct UamOutputs {
    pub r_lc: Tensor,
    pub r_hc: Tensor,
    pub r_uni: Tensor,
    /// `∪(X)`, predicted from `R_LC`.
    pub union_pred: Tensor,
    /// `∩(X)`, predicted from `R_HC`.
    pub inter_pred: Tensor,
    pub x_uni: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IucmOutputs {
    pub r_prime_uni: Tensor,
    pub r_prime_lc: Tensor,
    pub r_prime_hc: Tensor,
    pub s_uni: f64,
    pub s_lc: f64,
    pub s_hc: f64,
    /// Channels of the fused map fed to the segmentation conv.
    pub r_final_channels: usize,
    pub x_s: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutputs {
    pub r: Tensor,
    /// Absent when the uncertainty-aware branches are switched off.
    pub uam: Option<UamOutputs>,
    /// Absent when the constraining module is switched off.
    pub iucm: Option<IucmOutputs>,
    /// Final segmentation probabilities.
    pub x_s: Tensor,
    /// Predicted multi-confidence mask from `∪(X)` and `∩(X)`.
    pub mcm: Option<MultiConfidenceMask>,
}

fn uam_outputs(t: &Tape, u: &UamVars) -> UamOutputs {
    UamOutputs {
        r_lc: t.value(u.r_lc).clone(),
        r_hc: t.value(u.r_hc).clone(),
        r_uni: t.value(u.r_uni).clone(),
        union_pred: t.value(u.union).clone(),
        inter_pred: t.value(u.inter).clone(),
        x_uni: t.value(u.x_uni).clone(),
    }
}

fn iucm_outputs(t: &Tape, v: &IucmVars, x_s: Var) -> IucmOutputs {
    let [pu, pl, ph] = v.primes;
    let [su, sl, sh] = v.sims;
    let c = t.value(pu).channels;
    IucmOutputs {
        r_prime_uni: t.value(pu).clone(),
        r_prime_lc: t.value(pl).clone(),
        r_prime_hc: t.value(ph).clone(),
        s_uni: t.value(su).item(),
        s_lc: t.value(sl).item(),
        s_hc: t.value(sh).item(),
        r_final_channels: 4 * c,
        x_s: t.value(x_s).clone(),
    }
}

pub fn net_forward(state: &NetState, image: &Tensor) -> Result<ForwardOutputs> {
    let mut t = Tape::new(state.params());
    let g = build_graph(&mut t, state, image)?;
    let uam = g.uam.as_ref().map(|u| uam_outputs(&t, u));
    let iucm = g.iucm.as_ref().map(|v| iucm_outputs(&t, v, g.x_s));
    let mcm = match &uam {
        Some(u) => Some(compose_mcm(&u.union_pred.to_grid(0), &u.inter_pred.to_grid(0))?),
        None => None,
    };
    let out = ForwardOutputs {
        r: t.value(g.r).clone(),
        uam,
        iucm,
        x_s: t.value(g.x_s).clone(),
        mcm,
    };
    if !out.x_s.is_finite() {
        return Err(Error::NumericFault("segmentation output is non-finite".into()));
    }
    Ok(out)
}

/// Backbone feature map `R`.
pub fn fem_forward(state: &NetState, image: &Tensor) -> Result<Tensor> {
    check_input(state, image)?;
    let mut t = Tape::new(state.params());
    let x = t.input(image.clone());
    let r = state.layout.fem.apply(&mut t, x);
    Ok(t.value(r).clone())
}

fn missing(what: &str) -> Error {
    Error::Config(format!("network was built without the {what}"))
}

pub fn uam_forward(state: &NetState, r: &Tensor) -> Result<UamOutputs> {
    let uam = state.layout.uam.as_ref().ok_or_else(|| missing("uncertainty-aware module"))?;
    check_features(state, r, "R")?;
    let mut t = Tape::new(state.params());
    let rv = t.input(r.clone());
    let vars = uam_graph(&mut t, uam, rv);
    Ok(uam_outputs(&t, &vars))
}

/// `R′_z = R_z + Γ(A(R_z))` with the parameters of `branch` and filter `filter`.
pub fn faab_forward(state: &NetState, branch: Branch, r_z: &Tensor, filter: FilterKind) -> Result<Tensor> {
    let iucm = state.layout.iucm.as_ref().ok_or_else(|| missing("constraining module"))?;
    check_features(state, r_z, "R_z")?;
    let mut t = Tape::new(state.params());
    let x = t.input(r_z.clone());
    let out = iucm.faab(branch).apply(&mut t, state.config(), filter, x)?;
    Ok(t.value(out).clone())
}

pub fn iucm_forward(state: &NetState, r: &Tensor, r_lc: &Tensor, r_hc: &Tensor, r_uni: &Tensor) -> Result<IucmOutputs> {
    let iucm = state.layout.iucm.as_ref().ok_or_else(|| missing("constraining module"))?;
    for (x, what) in [(r, "R"), (r_lc, "R_LC"), (r_hc, "R_HC"), (r_uni, "R_Uni")] {
        check_features(state, x, what)?;
    }
    let mut t = Tape::new(state.params());
    let rv = t.input(r.clone());
    let branches = [t.input(r_uni.clone()), t.input(r_lc.clone()), t.input(r_hc.clone())];
    let (vars, x_s) = iucm_graph(&mut t, state.config(), iucm, rv, branches)?;
    Ok(iucm_outputs(&t, &vars, x_s))
}

/// Orientation-averaged Gabor response of every channel of `x`.
pub fn gabor_filter(x: &Tensor, gabor: &super::filters::GaborConfig) -> Result<Tensor> {
    gabor.validate()?;
    let data = super::filters::depthwise_replicate(&x.data, x.height, x.width, &gabor.mean_kernel(), gabor.kernel_size);
    Ok(Tensor::from_vec(x.channels, x.height, x.width, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(cfg: &NetConfig, phase: f64) -> Tensor {
        let n = cfg.input_size;
        let data = (0..cfg.in_channels * n * n)
            .map(|i| 0.5 + 0.4 * ((i as f64) * 0.37 + phase).sin())
            .collect();
        Tensor::from_vec(cfg.in_channels, n, n, data)
    }

    #[test]
    fn reduced_shapes() {
        let cfg = NetConfig::reduced(16, 2, 4);
        let state = NetState::init(&cfg, 1).unwrap();
        let out = net_forward(&state, &image(&cfg, 0.0)).unwrap();
        assert_eq!(out.r.shape(), (32, 16, 16));
        let u = out.uam.as_ref().unwrap();
        for t in [&u.union_pred, &u.inter_pred, &u.x_uni, &out.x_s] {
            assert_eq!(t.shape(), (1, 16, 16));
            assert!(t.data.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        let i = out.iucm.as_ref().unwrap();
        assert_eq!(i.r_final_channels, 128);
        for s in [i.s_uni, i.s_lc, i.s_hc] {
            assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn stages_compose_to_full_forward() {
        let cfg = NetConfig::reduced(16, 2, 4);
        let state = NetState::init(&cfg, 3).unwrap();
        let img = image(&cfg, 1.0);
        let full = net_forward(&state, &img).unwrap();
        let r = fem_forward(&state, &img).unwrap();
        assert_eq!(r, full.r);
        let u = uam_forward(&state, &r).unwrap();
        assert_eq!(&u, full.uam.as_ref().unwrap());
        let i = iucm_forward(&state, &r, &u.r_lc, &u.r_hc, &u.r_uni).unwrap();
        assert_eq!(&i, full.iucm.as_ref().unwrap());
        assert_eq!(i.x_s, full.x_s);
        let p = faab_forward(&state, Branch::Hc, &u.r_hc, FilterKind::Otsu).unwrap();
        assert_eq!(p, i.r_prime_hc);
    }

    #[test]
    fn zero_value_projection_is_identity() {
        let cfg = NetConfig::reduced(16, 2, 4);
        let mut state = NetState::init(&cfg, 5).unwrap();
        for name in ["iucm.faab_lc.value.weight", "iucm.faab_lc.value.bias"] {
            state.param_by_name_mut(name).unwrap().data.fill(0.0);
        }
        let r = fem_forward(&state, &image(&cfg, 2.0)).unwrap();
        for filter in [FilterKind::Gabor, FilterKind::Otsu] {
            assert_eq!(faab_forward(&state, Branch::Lc, &r, filter).unwrap(), r);
        }
    }

    #[test]
    fn iucm_toggle_only_changes_segmentation() {
        let cfg = NetConfig::reduced(16, 2, 4);
        let full = NetState::init(&cfg, 9).unwrap();
        let mut off_cfg = cfg.clone();
        off_cfg.branch_toggles.use_iucm = false;
        let mut off = NetState::init(&off_cfg, 9).unwrap();
        for p in off.params_mut() {
            if let Some(src) = full.param_by_name(&p.name) {
                p.data.clone_from(&src.data);
            }
        }
        let img = image(&cfg, 0.3);
        let a = net_forward(&full, &img).unwrap();
        let b = net_forward(&off, &img).unwrap();
        assert_eq!(a.uam, b.uam);
        assert!(b.iucm.is_none());
        assert_ne!(a.x_s, b.x_s);
    }

    #[test]
    fn backbone_only_has_single_head() {
        let cfg = NetConfig::reduced(16, 2, 4).backbone_only();
        let state = NetState::init(&cfg, 2).unwrap();
        let out = net_forward(&state, &image(&cfg, 0.0)).unwrap();
        assert!(out.uam.is_none() && out.iucm.is_none() && out.mcm.is_none());
        assert_eq!(out.x_s.shape(), (1, 16, 16));
    }

    #[test]
    fn rejects_wrong_shape_and_bad_params() {
        let cfg = NetConfig::reduced(16, 2, 4);
        let mut state = NetState::init(&cfg, 2).unwrap();
        let bad = Tensor::zeros(3, 8, 8);
        assert!(matches!(net_forward(&state, &bad), Err(Error::InvalidInput(_))));
        state.params_mut()[0].data[0] = f64::NAN;
        assert!(matches!(
            net_forward(&state, &image(&cfg, 0.0)),
            Err(Error::NumericFault(_))
        ));
    }
}
