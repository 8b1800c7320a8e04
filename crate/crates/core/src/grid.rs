//! Hyperparameter grids.
//!
//! Enumeration order is lexicographic over the axes in declaration order:
//! hidden layout, batch size, weight method, decay factor, optimizer,
//! learning rate (fastest varying). The index of a point in that order is
//! also its tie-break rank during model selection.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::features::Modality;
use crate::model::{DecayMode, OptimizerConfig, OptimizerKind, WeightMethod};

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GridSpace {
    pub hidden: Vec<Vec<usize>>,
    pub batch_sizes: Vec<usize>,
    pub weight_methods: Vec<WeightMethod>,
    pub decay_factors: Vec<Option<f64>>,
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GridPoint {
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub weight_method: WeightMethod,
    pub decay_factor: Option<f64>,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
}

impl GridPoint {
    pub fn optimizer_config(&self, decay_mode: DecayMode) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            decay_factor: self.decay_factor,
            decay_mode,
            batch_size: self.batch_size,
        }
    }
}

const LEARNING_RATES: [f64; 3] = [1e-2, 1e-3, 1e-4];
const OPTIMIZERS: [OptimizerKind; 2] = [OptimizerKind::Adam, OptimizerKind::Sgd];

impl GridSpace {
    /// Three 3-4 layer networks, four batch sizes, ratio-based weights only,
    /// no rate decay.
    pub fn acoustic_default() -> Self {
        GridSpace {
            hidden: vec![vec![64, 32, 16], vec![128, 64, 32], vec![128, 64, 32, 32]],
            batch_sizes: vec![32, 64, 128, 256],
            weight_methods: vec![WeightMethod::InverseFreqSum, WeightMethod::InverseFreqMax],
            decay_factors: vec![None],
            optimizers: OPTIMIZERS.to_vec(),
            learning_rates: LEARNING_RATES.to_vec(),
        }
    }

    /// Nine 1-3 layer networks, batch size 25, max-ratio weights, two decay
    /// factors.
    pub fn lexical_default() -> Self {
        GridSpace {
            hidden: vec![
                vec![300, 200, 100],
                vec![200, 100, 50],
                vec![300, 200],
                vec![200, 100],
                vec![100, 50],
                vec![300],
                vec![200],
                vec![100],
                vec![50],
            ],
            batch_sizes: vec![25],
            weight_methods: vec![WeightMethod::InverseFreqMax],
            decay_factors: vec![Some(1e-1), Some(5e-1)],
            optimizers: OPTIMIZERS.to_vec(),
            learning_rates: LEARNING_RATES.to_vec(),
        }
    }

    /// Fused inputs reuse the lexical space.
    pub fn default_for(modality: Modality) -> Self {
        match modality {
            Modality::Acoustic => GridSpace::acoustic_default(),
            Modality::Lexical | Modality::Fused => GridSpace::lexical_default(),
        }
    }

    pub fn len(&self) -> usize {
        self.hidden.len()
            * self.batch_sizes.len()
            * self.weight_methods.len()
            * self.decay_factors.len()
            * self.optimizers.len()
            * self.learning_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product in the documented order.
    pub fn enumerate(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.len());
        for h in &self.hidden {
            for &batch_size in &self.batch_sizes {
                for &weight_method in &self.weight_methods {
                    for &decay_factor in &self.decay_factors {
                        for &optimizer in &self.optimizers {
                            for &learning_rate in &self.learning_rates {
                                out.push(GridPoint {
                                    hidden: h.clone(),
                                    batch_size,
                                    weight_method,
                                    decay_factor,
                                    optimizer,
                                    learning_rate,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn grid_enumerate(space: &GridSpace) -> Vec<GridPoint> {
    space.enumerate()
}
