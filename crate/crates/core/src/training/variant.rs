//! The six ablation variants of the training pipeline.

use std::fmt;
use std::str::FromStr;

use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Everything on.
    Sharp,
    NoStagger,
    NoHardConstraints,
    NoModifiedMlp,
    NoFourier,
    /// Raw coordinates, standard MLP, sigmoid head, combined loss.
    Plain,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Sharp,
        Variant::NoStagger,
        Variant::NoHardConstraints,
        Variant::NoModifiedMlp,
        Variant::NoFourier,
        Variant::Plain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sharp => "sharp",
            Variant::NoStagger => "no-stagger",
            Variant::NoHardConstraints => "no-hard-constraints",
            Variant::NoModifiedMlp => "no-modified-mlp",
            Variant::NoFourier => "no-fourier",
            Variant::Plain => "plain",
        }
    }

    /// The configuration of this variant derived from `base`.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Variant::Sharp => {}
            Variant::NoStagger => c.stagger = false,
            Variant::NoHardConstraints => c.network.hard_constraints = false,
            Variant::NoModifiedMlp => c.network.modified_mlp = false,
            Variant::NoFourier => c.network.fourier = false,
            Variant::Plain => {
                c.stagger = false;
                c.network.hard_constraints = false;
                c.network.modified_mlp = false;
                c.network.fourier = false;
            }
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant `{s}` (expected one of {})", names.join(", "))
            })
    }
}
