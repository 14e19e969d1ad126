use crate::error::Result;
use crate::store::spec::{ModelSpec, ShapePlan};
use crate::store::weights::WeightStore;

/// A spec together with weights that match it.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub plan: ShapePlan,
    pub weights: WeightStore,
}

impl Model {
    pub fn new(spec: ModelSpec, weights: WeightStore) -> Result<Self> {
        let plan = spec.infer_shapes()?;
        weights.validate(&plan)?;
        Ok(Self {
            spec,
            plan,
            weights,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Output channel count of every conv layer.
    pub fn conv_widths(&self) -> Vec<usize> {
        self.plan.convs.iter().map(|c| c.out_channels).collect()
    }

    pub fn total_kernels(&self) -> usize {
        self.conv_widths().iter().sum()
    }

    pub fn fingerprint(&self) -> String {
        self.weights.fingerprint()
    }
}
