//! SGD with Nesterov momentum and L2 regularization, driven by per-group
//! piecewise learning-rate decay schedules with optional phase offsets.
//!
//! A schedule `(q, Δt)` multiplies the learning rate by `q` every `Δt`
//! epochs. Decay events occur at `phase`, `phase + Δt`, `phase + 2Δt`, …;
//! each event uses the factor of the piece active at that epoch. The
//! out-of-phase arrangement offsets the FC-group events from the CL-group
//! events by 10 epochs:
//!
//! ```
//! use poolnet::optim::hyper_table;
//! use poolnet::arch::ArchName;
//!
//! let defaults = hyper_table(ArchName::AVgg16).unwrap();
//! let fc = &defaults.fc().unwrap().schedule;
//! assert_eq!(fc.decay_epochs(60), vec![10, 30, 50]);
//! let cl = &defaults.cl().schedule;
//! assert_eq!(cl.decay_epochs(60), vec![20, 40, 60]);
//! ```

use crate::arch::ArchName;
use crate::error::{Error, Result};
use crate::network::{Network, NetGradients, ParamGroup, ParamKind};
use serde::{Deserialize, Serialize};

/// One piece of a decay schedule: factor `q` applies to decay events up to
/// and including epoch `until` (the last piece leaves it `None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePiece {
    pub factor: f64,
    pub until: Option<usize>,
}

/// Piecewise multiplicative learning-rate decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySchedule {
    pub base_rate: f64,
    /// Epoch of the first decay event.
    pub phase: usize,
    /// Epochs between decay events.
    pub period: usize,
    pub pieces: Vec<SchedulePiece>,
}

impl DecaySchedule {
    /// No decay: the rate stays at `base_rate` forever.
    pub fn constant(base_rate: f64) -> Self {
        DecaySchedule {
            base_rate,
            phase: 0,
            period: 0,
            pieces: Vec::new(),
        }
    }

    /// Single `(q, Δt)` rule with events at Δt, 2Δt, ….
    pub fn uniform(base_rate: f64, q: f64, dt: usize) -> Self {
        DecaySchedule {
            base_rate,
            phase: dt,
            period: dt,
            pieces: vec![SchedulePiece {
                factor: q,
                until: None,
            }],
        }
    }

    /// Two-piece rule with events at Δt, 2Δt, …; the first factor covers
    /// events at epochs <= `last_first` and the second the rest.
    pub fn two_piece(base_rate: f64, q1: f64, last_first: usize, q2: f64, dt: usize) -> Self {
        Self::two_piece_phased(base_rate, q1, last_first, q2, dt, dt)
    }

    /// Two-piece rule whose first event is at `phase` rather than Δt.
    pub fn two_piece_phased(
        base_rate: f64,
        q1: f64,
        last_first: usize,
        q2: f64,
        dt: usize,
        phase: usize,
    ) -> Self {
        DecaySchedule {
            base_rate,
            phase,
            period: dt,
            pieces: vec![
                SchedulePiece {
                    factor: q1,
                    until: Some(last_first),
                },
                SchedulePiece {
                    factor: q2,
                    until: None,
                },
            ],
        }
    }

    fn factor_at(&self, event_epoch: usize) -> f64 {
        for piece in &self.pieces {
            match piece.until {
                Some(u) if event_epoch <= u => return piece.factor,
                None => return piece.factor,
                _ => {}
            }
        }
        1.0
    }

    /// Decay event epochs up to and including `epoch`.
    pub fn decay_epochs(&self, epoch: usize) -> Vec<usize> {
        let mut out = Vec::new();
        if self.pieces.is_empty() || self.period == 0 {
            return out;
        }
        let mut e = self.phase;
        while e <= epoch {
            out.push(e);
            e += self.period;
        }
        out
    }

    /// Learning rate in effect at `epoch`: the base rate times the factor
    /// of every decay event at or before it.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.decay_epochs(epoch)
            .into_iter()
            .fold(self.base_rate, |lr, e| lr * self.factor_at(e))
    }
}

/// Hyperparameters for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupHyper {
    pub momentum: f64,
    pub l2: f64,
    pub schedule: DecaySchedule,
}

impl GroupHyper {
    pub fn new(eta: f64, momentum: f64, l2: f64, schedule: DecaySchedule) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        if l2 < 0.0 {
            return Err(Error::Config(format!("negative L2 coefficient {l2}")));
        }
        let mut schedule = schedule;
        schedule.base_rate = eta;
        Ok(GroupHyper {
            momentum,
            l2,
            schedule,
        })
    }
}

/// Per-group hyperparameters plus run-level defaults transcribed from the
/// per-architecture tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDefaults {
    pub cl: GroupHyper,
    /// `None` means a single group drives both CL and FC parameters.
    pub fc_group: Option<GroupHyper>,
    pub epochs: usize,
    pub batch_size: usize,
}

impl TrainDefaults {
    pub fn cl(&self) -> &GroupHyper {
        &self.cl
    }

    pub fn fc(&self) -> Option<&GroupHyper> {
        self.fc_group.as_ref()
    }

    pub fn for_group(&self, group: ParamGroup) -> &GroupHyper {
        match group {
            ParamGroup::Cl => &self.cl,
            ParamGroup::Fc => self.fc_group.as_ref().unwrap_or(&self.cl),
        }
    }
}

/// Published per-architecture hyperparameters (batch size 100 throughout).
pub fn hyper_table(name: ArchName) -> Result<TrainDefaults> {
    use ArchName::*;
    let d = |cl: GroupHyper, fc: Option<GroupHyper>, epochs: usize| TrainDefaults {
        cl,
        fc_group: fc,
        epochs,
        batch_size: 100,
    };
    let g = GroupHyper::new;
    Ok(match name {
        AVgg16 => d(
            g(
                0.00721,
                0.98,
                1.15e-3,
                DecaySchedule::two_piece(0.0, 0.65, 140, 0.55, 20),
            )?,
            Some(g(
                0.0045,
                0.982,
                1.35e-3,
                DecaySchedule::two_piece_phased(0.0, 0.65, 149, 0.5, 20, 10),
            )?),
            280,
        ),
        AVgg14 => d(
            g(0.0078, 0.985, 1.15e-3, DecaySchedule::uniform(0.0, 0.65, 20))?,
            Some(g(
                6.05e-4,
                0.98,
                1.15e-3,
                DecaySchedule::two_piece(0.0, 0.55, 119, 0.5, 10),
            )?),
            200,
        ),
        AVgg13 => d(
            g(0.0078, 0.98, 1.15e-3, DecaySchedule::uniform(0.0, 0.65, 20))?,
            Some(g(
                0.00297,
                0.985,
                1.15e-3,
                DecaySchedule::two_piece(0.0, 0.55, 119, 0.5, 20),
            )?),
            200,
        ),
        AVgg8 => d(
            g(
                0.0145,
                0.97,
                1e-3,
                DecaySchedule::two_piece(0.0, 0.66, 140, 0.55, 20),
            )?,
            Some(g(
                0.002,
                0.975,
                1.2e-3,
                DecaySchedule::two_piece_phased(0.0, 0.66, 149, 0.5, 20, 10),
            )?),
            200,
        ),
        AVgg6 => d(
            g(
                9.75e-3,
                0.972,
                1.1e-3,
                DecaySchedule::two_piece(0.0, 0.65, 119, 0.55, 20),
            )?,
            Some(g(
                1.95e-3,
                0.98,
                1.1e-3,
                DecaySchedule::two_piece(0.0, 0.65, 119, 0.5, 20),
            )?),
            200,
        ),
        AVgg16Linear | AVgg13Linear => d(
            g(0.0078, 0.98, 1.15e-3, DecaySchedule::uniform(0.0, 0.65, 20))?,
            Some(g(
                0.00297,
                0.985,
                1.15e-3,
                DecaySchedule::two_piece(0.0, 0.55, 119, 0.5, 20),
            )?),
            200,
        ),
        ALeNet5A => lenet_defaults(0.032, 0.92, 5e-4, 240)?,
        ALeNet5B => lenet_defaults(0.03, 0.93, 4e-4, 280)?,
        ALeNet5C => lenet_defaults(0.028, 0.925, 5e-4, 280)?,
        ALeNet5D => lenet_defaults(0.032, 0.92, 5e-4, 240)?,
        ALeNet5E => lenet_defaults(0.02, 0.922, 1.2e-3, 240)?,
        Vgg16 | Vgg8 | LeNet5 => {
            return Err(Error::UnknownArch(format!(
                "{name}: no published hyperparameter row for baseline architectures"
            )))
        }
    })
}

fn lenet_defaults(eta: f64, mu: f64, alpha: f64, epochs: usize) -> Result<TrainDefaults> {
    Ok(TrainDefaults {
        cl: GroupHyper::new(
            eta,
            mu,
            alpha,
            DecaySchedule::two_piece(0.0, 0.8, 119, 0.7, 10),
        )?,
        fc_group: None,
        epochs,
        batch_size: 100,
    })
}

/// Nesterov update form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NesterovForm {
    /// Lookahead applied to the update: θ ← θ + μ·v − η·g' after
    /// v ← μ·v − η·g'.
    #[default]
    Lookahead,
    /// Classical two-sequence form: θ ← θ + v.
    Classical,
}

/// SGD optimizer state: one velocity buffer per parameter tensor.
#[derive(Debug, Clone)]
pub struct Sgd {
    velocities: Vec<Vec<f64>>,
    pub form: NesterovForm,
    /// Apply L2 to bias and batch-norm parameters as well as weights.
    pub l2_on_all: bool,
    pub step_count: usize,
}

impl Sgd {
    pub fn new(net: &mut Network) -> Self {
        Self::with_options(net, NesterovForm::Lookahead, true)
    }

    pub fn with_options(net: &mut Network, form: NesterovForm, l2_on_all: bool) -> Self {
        let velocities = net
            .params_mut()
            .iter()
            .map(|(p, _, _)| vec![0.0; p.len()])
            .collect();
        Sgd {
            velocities,
            form,
            l2_on_all,
            step_count: 0,
        }
    }

    /// One parameter update. Learning rates come from each group's schedule
    /// evaluated at `epoch`.
    pub fn step(
        &mut self,
        net: &mut Network,
        grads: &NetGradients,
        hyper: &TrainDefaults,
        epoch: usize,
    ) -> Result<()> {
        let flat_grads = Network::flatten_grads(grads);
        let params = net.params_mut();
        if flat_grads.len() != params.len() || params.len() != self.velocities.len() {
            return Err(Error::Config(format!(
                "gradient/parameter mismatch: {} grads, {} params, {} velocities",
                flat_grads.len(),
                params.len(),
                self.velocities.len()
            )));
        }
        for (((theta, group, kind), grad), velocity) in
            params.into_iter().zip(flat_grads).zip(&mut self.velocities)
        {
            if theta.len() != grad.len() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{} gradient entries", theta.len()),
                    got: format!("{}", grad.len()),
                });
            }
            let h = hyper.for_group(group);
            let eta = h.schedule.lr_at_epoch(epoch);
            let mu = h.momentum;
            let alpha = if self.l2_on_all || matches!(kind, ParamKind::Weight) {
                h.l2
            } else {
                0.0
            };
            for ((t, &g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                let g_eff = g + alpha * *t;
                *v = mu * *v - eta * g_eff;
                match self.form {
                    NesterovForm::Lookahead => *t += mu * *v - eta * g_eff,
                    NesterovForm::Classical => *t += *v,
                }
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ArchItem, ArchSpec, Activation};
    use crate::pooling::PoolingOp;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn lr_examples_from_the_tables() {
        let t = hyper_table(ArchName::AVgg16).unwrap();
        // one CL decay event by epoch 25, at epoch 20
        assert!(approx(t.cl().schedule.lr_at_epoch(25), 0.00721 * 0.65));
        // FC untouched before its first event at 10
        assert!(approx(t.fc().unwrap().schedule.lr_at_epoch(5), 0.0045));
        // epoch 0 is always the base rate
        assert!(approx(t.cl().schedule.lr_at_epoch(0), 0.00721));
    }

    #[test]
    fn out_of_phase_events_interleave_with_gap_10() {
        for name in [ArchName::AVgg16, ArchName::AVgg8] {
            let t = hyper_table(name).unwrap();
            let fc = t.fc().unwrap().schedule.decay_epochs(100);
            let cl = t.cl().schedule.decay_epochs(100);
            assert_eq!(fc, vec![10, 30, 50, 70, 90]);
            assert_eq!(cl, vec![20, 40, 60, 80, 100]);
            assert!(fc.iter().all(|e| !cl.contains(e)));
        }
    }

    #[test]
    fn piece_boundaries_transcribed_literally() {
        let t = hyper_table(ArchName::AVgg16).unwrap();
        let cl = &t.cl().schedule;
        // events at 20..140 use 0.65, events after 140 use 0.55
        let lr140 = cl.lr_at_epoch(140);
        assert!(approx(lr140, 0.00721 * 0.65f64.powi(7)));
        let lr160 = cl.lr_at_epoch(160);
        assert!(approx(lr160, 0.00721 * 0.65f64.powi(7) * 0.55));

        let fc = &t.fc().unwrap().schedule;
        // event at 150 already uses 0.5 (epoch >= 150 piece)
        let lr150 = fc.lr_at_epoch(150);
        assert!(approx(lr150, 0.0045 * 0.65f64.powi(7) * 0.5));
    }

    #[test]
    fn lr_is_non_increasing_for_all_published_schedules() {
        use ArchName::*;
        for name in [
            AVgg6, AVgg8, AVgg13, AVgg14, AVgg16, AVgg13Linear, AVgg16Linear, ALeNet5A, ALeNet5B,
            ALeNet5C, ALeNet5D, ALeNet5E,
        ] {
            let t = hyper_table(name).unwrap();
            let mut schedules = vec![&t.cl().schedule];
            if let Some(fc) = t.fc() {
                schedules.push(&fc.schedule);
            }
            for s in schedules {
                let mut prev = s.lr_at_epoch(0);
                for epoch in 1..=t.epochs {
                    let lr = s.lr_at_epoch(epoch);
                    assert!(lr <= prev + 1e-15, "{name}: lr rose at epoch {epoch}");
                    prev = lr;
                }
            }
        }
    }

    #[test]
    fn lenet_single_group_constants() {
        let t = hyper_table(ArchName::ALeNet5E).unwrap();
        assert!(t.fc().is_none());
        assert!(approx(t.cl().schedule.base_rate, 0.02));
        assert!(approx(t.cl().momentum, 0.922));
        assert!(approx(t.cl().l2, 1.2e-3));
        assert_eq!(t.epochs, 240);
        assert_eq!(t.batch_size, 100);
    }

    fn one_param_net() -> (Network, TrainDefaults) {
        // Smallest network with a single FC stack; used to exercise updates.
        let spec = ArchSpec::new(vec![
            ArchItem::ConvBlock {
                count: 1,
                depth: 1,
                kernel: 3,
                padding: 1,
                batchnorm: false,
            },
            ArchItem::Pool(PoolingOp::max(8)),
            ArchItem::Flatten,
            ArchItem::Fc { out: 4 },
            ArchItem::Activation(Activation::Relu),
            ArchItem::SoftmaxOutput { classes: 10 },
        ]);
        let net = Network::build(&spec, 11).unwrap();
        let defaults = TrainDefaults {
            cl: GroupHyper::new(1.0, 0.0, 0.0, DecaySchedule::constant(0.0)).unwrap(),
            fc_group: None,
            epochs: 1,
            batch_size: 1,
        };
        (net, defaults)
    }

    #[test]
    fn plain_sgd_reduction_case() {
        let (mut net, defaults) = one_param_net();
        let before: Vec<Vec<f64>> = net.params_mut().iter().map(|(p, _, _)| (*p).clone()).collect();
        // fake unit gradients
        let grads_flat: Vec<Vec<f64>> = before.iter().map(|p| vec![0.5; p.len()]).collect();
        let grads = fake_grads(&mut net, grads_flat);
        let mut opt = Sgd::new(&mut net);
        opt.step(&mut net, &grads, &defaults, 0).unwrap();
        for ((after, _, _), b) in net.params_mut().iter().zip(&before) {
            for (a, bb) in after.iter().zip(b) {
                assert!(approx(*a, bb - 1.0 * 0.5));
            }
        }
    }

    #[test]
    fn nesterov_two_step_recurrence() {
        // mu = 0.9, eta = 1, constant gradient g: after step 1 the velocity
        // is -g and the parameter moved by -1.9 g.
        let (mut net, _) = one_param_net();
        let defaults = TrainDefaults {
            cl: GroupHyper::new(1.0, 0.9, 0.0, DecaySchedule::constant(0.0)).unwrap(),
            fc_group: None,
            epochs: 1,
            batch_size: 1,
        };
        let before: Vec<Vec<f64>> = net.params_mut().iter().map(|(p, _, _)| (*p).clone()).collect();
        let g = 0.3;
        let grads_flat: Vec<Vec<f64>> = before.iter().map(|p| vec![g; p.len()]).collect();
        let grads = fake_grads(&mut net, grads_flat);
        let mut opt = Sgd::new(&mut net);
        opt.step(&mut net, &grads, &defaults, 0).unwrap();
        for ((after, _, _), b) in net.params_mut().iter().zip(&before) {
            for (a, bb) in after.iter().zip(b) {
                assert!(approx(*a, bb - 1.9 * g));
            }
        }
        for v in &opt.velocities {
            for vi in v {
                assert!(approx(*vi, -g));
            }
        }
    }

    #[test]
    fn weight_decay_shrinks_with_zero_gradient() {
        let (mut net, _) = one_param_net();
        let defaults = TrainDefaults {
            cl: GroupHyper::new(0.1, 0.0, 0.01, DecaySchedule::constant(0.0)).unwrap(),
            fc_group: None,
            epochs: 1,
            batch_size: 1,
        };
        // seed a known parameter value
        for (p, _, _) in net.params_mut() {
            for v in p.iter_mut() {
                *v = 2.0;
            }
        }
        let grads_flat: Vec<Vec<f64>> = net
            .params_mut()
            .iter()
            .map(|(p, _, _)| vec![0.0; p.len()])
            .collect();
        let grads = fake_grads(&mut net, grads_flat);
        let mut opt = Sgd::new(&mut net);
        opt.step(&mut net, &grads, &defaults, 0).unwrap();
        for (p, _, _) in net.params_mut() {
            for v in p.iter() {
                assert!(v.abs() < 2.0);
            }
        }
    }

    /// Wrap flat per-parameter gradients back into the NetGradients layout.
    fn fake_grads(net: &mut Network, flat: Vec<Vec<f64>>) -> NetGradients {
        use crate::network::Layer;
        let mut it = flat.into_iter();
        let layers = net
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(_) | Layer::BatchNorm(_) | Layer::Fc(_) => {
                    vec![it.next().unwrap(), it.next().unwrap()]
                }
                _ => Vec::new(),
            })
            .collect();
        NetGradients {
            layers,
            input: crate::tensor::Tensor::zeros(crate::tensor::Shape::new(1, 1, 1, 1)).unwrap(),
        }
    }
}
