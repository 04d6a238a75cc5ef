use rand::Rng;

use crate::backbone::{ConvLayer, Namer, RELU_GAIN};
use crate::error::Result;
use crate::nn::{ConvSpec, Graph, ParamStore, Scalar, Var};

/// Shared 3×3 trunk followed by sibling 1×1 objectness and box-delta convolutions.
#[derive(Clone, Debug)]
pub struct RpnHead {
    pub trunk: ConvLayer,
    pub cls: ConvLayer,
    pub reg: ConvLayer,
    pub anchors_per_cell: usize,
}

impl RpnHead {
    pub fn build<T: Scalar>(
        channels: usize,
        anchors_per_cell: usize,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut names = Namer::new("head");
        let trunk_spec = ConvSpec::new(channels, channels, 3).same_padding();
        let trunk = ConvLayer::build(store, &names.layer(), trunk_spec, true, RELU_GAIN, rng)?;
        let cls_spec = ConvSpec::pointwise(channels, anchors_per_cell);
        let cls = ConvLayer::build(store, &names.layer(), cls_spec, true, 1.0, rng)?;
        let reg_spec = ConvSpec::pointwise(channels, 4 * anchors_per_cell);
        let reg = ConvLayer::build(store, &names.layer(), reg_spec, true, 0.1, rng)?;
        Ok(Self {
            trunk,
            cls,
            reg,
            anchors_per_cell,
        })
    }

    /// Returns `(logits B×A×h×w, deltas B×4A×h×w)`.
    pub fn forward<'a, T: Scalar>(
        &self,
        g: &mut Graph<'a, T>,
        store: &'a ParamStore<T>,
        features: Var,
    ) -> Result<(Var, Var)> {
        let t = self.trunk.forward(g, store, features)?;
        let t = g.relu(t);
        let logits = self.cls.forward(g, store, t)?;
        let deltas = self.reg.forward(g, store, t)?;
        Ok((logits, deltas))
    }
}
