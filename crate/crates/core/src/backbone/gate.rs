use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{ConvSpec, Graph, ParamId, ParamStore, Scalar, Tensor, Var};

use super::layers::{ConvLayer, Namer, RELU_GAIN};

/// Additive attention gate coupling the auxiliary branch into the primary one.
#[derive(Clone, Debug)]
pub struct AttentionGate {
    pub channels: usize,
    pub mid_channels: usize,
    pub w_r: ParamId,
    pub w_l: ParamId,
    pub psi: ParamId,
    pub b_psi: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct GateOutput {
    /// One-channel coefficient map in (0, 1).
    pub alpha: Var,
    pub output: Var,
}

impl AttentionGate {
    /// A standalone gate whose parameters are named under `module`.
    pub fn new<T: Scalar>(
        channels: usize,
        mid_channels: usize,
        store: &mut ParamStore<T>,
        module: &str,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::build(channels, mid_channels, store, &mut Namer::new(module), rng)
    }

    pub(crate) fn build<T: Scalar>(
        channels: usize,
        mid_channels: usize,
        store: &mut ParamStore<T>,
        names: &mut Namer,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w_r = ConvLayer::build(
            store,
            &names.layer(),
            ConvSpec::pointwise(channels, mid_channels),
            false,
            RELU_GAIN,
            rng,
        )?;
        let w_l = ConvLayer::build(
            store,
            &names.layer(),
            ConvSpec::pointwise(channels, mid_channels),
            false,
            RELU_GAIN,
            rng,
        )?;
        let psi = ConvLayer::build(
            store,
            &names.layer(),
            ConvSpec::pointwise(mid_channels, 1),
            true,
            1.0,
            rng,
        )?;
        names.next_block();
        Ok(Self {
            channels,
            mid_channels,
            w_r: w_r.weight,
            w_l: w_l.weight,
            psi: psi.weight,
            b_psi: psi.bias.expect("psi has a bias"),
        })
    }

    pub fn forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        x_r: Var,
        x_l: Var,
    ) -> Result<GateOutput> {
        let w_r = g.param(store, self.w_r);
        let w_l = g.param(store, self.w_l);
        let psi = g.param(store, self.psi);
        let b_psi = g.param(store, self.b_psi);
        additive_attention_gate(g, x_r, x_l, w_r, w_l, psi, b_psi)
    }

    /// Sets psi to zero and its bias to `b`, e.g. to open (b = 0) or close (b ≪ 0) the gate.
    pub fn set_psi<T: Scalar>(&self, store: &mut ParamStore<T>, b: f64) {
        store.get_mut(self.psi).data_mut().fill(T::zero());
        store.get_mut(self.b_psi).data_mut().fill(T::from_f64(b));
    }
}

/// `α = sigmoid(psi · relu(W_r x_r + W_l x_l) + b_psi)`, output `x_r + x_r ⊙ α`.
///
/// Weights are plain variables so the whole gate can be differentiated end to end.
pub fn additive_attention_gate<T: Scalar>(
    g: &mut Graph<'_, T>,
    x_r: Var,
    x_l: Var,
    w_r: Var,
    w_l: Var,
    psi: Var,
    b_psi: Var,
) -> Result<GateOutput> {
    let (rs, ls) = (g.value(x_r).shape(), g.value(x_l).shape());
    if rs != ls {
        return Err(Error::config(format!(
            "attention gate inputs differ in shape: {rs:?} vs {ls:?}"
        )));
    }
    let (_, c, _, _) = g.value(x_r).dims4()?;
    let mid = g.value(w_r).shape()[0];
    let pw = ConvSpec::pointwise(c, mid);
    let a = g.conv2d(x_r, w_r, None, pw)?;
    let b = g.conv2d(x_l, w_l, None, pw)?;
    let s = g.add(a, b)?;
    let s = g.relu(s);
    let logit = g.conv2d(s, psi, Some(b_psi), ConvSpec::pointwise(mid, 1))?;
    let alpha = g.sigmoid(logit);
    let gated = g.mul(x_r, alpha)?;
    let output = g.add(x_r, gated)?;
    Ok(GateOutput { alpha, output })
}

/// Evaluates a gate on concrete tensors, returning (α, output).
pub fn gate_forward<T: Scalar>(
    gate: &AttentionGate,
    store: &ParamStore<T>,
    x_r: &Tensor<T>,
    x_l: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut g = Graph::new();
    let r = g.input(x_r.clone());
    let l = g.input(x_l.clone());
    let out = gate.forward(&mut g, store, r, l)?;
    Ok((g.value(out.alpha).clone(), g.value(out.output).clone()))
}
