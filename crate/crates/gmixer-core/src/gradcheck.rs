//! Central finite-difference verification of the tape's analytic gradients.
//!
//! Runs at f64 only: the difference quotient needs the headroom, and a
//! backward-pass bug shows up identically at either precision.

use crate::error::Result;
use crate::params::ParamRegistry;
use crate::tape::{Tape, VarId};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Target number of sampled coordinates (spread over parameter groups,
    /// at least one per group, so the realized count may be slightly higher).
    pub probes: usize,
    /// Central-difference step.
    pub step: f64,
    pub seed: u64,
    /// Fault-injection hook: skews the analytic gradients by 1% before
    /// comparing, to prove the detector actually fires.
    pub corrupt_backward: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            probes: 200,
            step: 1e-5,
            seed: 1,
            corrupt_backward: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub group: String,
    pub probes: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub probes: usize,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_relative_error < threshold
    }
}

/// Parameters sharing a name prefix (everything before the final dot)
/// report together: `layers.0.mixer.token.w1` lands in `layers.0.mixer.token`.
fn group_of(name: &str) -> &str {
    match name.rsplit_once('.') {
        Some((prefix, _)) => prefix,
        None => name,
    }
}

/// Compare analytic gradients with central differences on sampled
/// coordinates. `build` must deterministically reconstruct the forward pass
/// from the registry's current values.
pub fn grad_check<B>(
    mut build: B,
    registry: &mut ParamRegistry<f64>,
    options: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    B: FnMut(&ParamRegistry<f64>) -> Result<(Tape<f64>, VarId)>,
{
    registry.zero_grads();
    let (tape, loss) = build(registry)?;
    tape.backward(loss, registry)?;

    let corruption = if options.corrupt_backward { 1.01 } else { 1.0 };
    let analytic: Vec<Vec<f64>> = registry
        .iter()
        .map(|(_, p)| p.grad.data().iter().map(|&g| g * corruption).collect())
        .collect();
    registry.zero_grads();

    // group -> list of (param index, coordinate count)
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (id, p) in registry.iter() {
        let g = group_of(&p.name).to_string();
        match groups.iter_mut().find(|(name, _)| *name == g) {
            Some((_, members)) => members.push(id.index()),
            None => groups.push((g, vec![id.index()])),
        }
    }
    let total: usize = registry.total_values();
    let mut rng = crate::rng::SplitMix64::new(options.seed);
    let h = options.step;

    let param_ids: Vec<crate::params::ParamId> = registry.iter().map(|(id, _)| id).collect();
    let sizes: Vec<usize> = registry.iter().map(|(_, p)| p.value.len()).collect();

    let mut reports = Vec::with_capacity(groups.len());
    let mut worst = 0.0f64;
    let mut total_probes = 0usize;

    for (group, members) in &groups {
        let group_size: usize = members.iter().map(|&m| sizes[m]).sum();
        if group_size == 0 {
            continue;
        }
        let quota = ((options.probes * group_size).div_ceil(total)).max(1);
        let mut group_worst = 0.0f64;
        for _ in 0..quota {
            // pick a coordinate uniformly within the group
            let mut flat = rng.below(group_size);
            let mut member = members[0];
            for &m in members {
                if flat < sizes[m] {
                    member = m;
                    break;
                }
                flat -= sizes[m];
            }
            let pid = param_ids[member];

            let orig = registry.coord(pid, flat);
            registry.set_coord(pid, flat, orig + h);
            let (tape_up, loss_up) = build(registry)?;
            let up = tape_up.value(loss_up).item()?;
            registry.set_coord(pid, flat, orig - h);
            let (tape_dn, loss_dn) = build(registry)?;
            let down = tape_dn.value(loss_dn).item()?;
            registry.set_coord(pid, flat, orig);

            let numeric = (up - down) / (2.0 * h);
            let exact = analytic[member][flat];
            let denom = exact.abs().max(numeric.abs());
            let err = if denom < 1e-8 {
                (exact - numeric).abs()
            } else {
                (exact - numeric).abs() / denom
            };
            group_worst = group_worst.max(err);
        }
        worst = worst.max(group_worst);
        total_probes += quota;
        reports.push(GroupReport {
            group: group.clone(),
            probes: quota,
            max_relative_error: group_worst,
        });
    }

    Ok(GradCheckReport {
        max_relative_error: worst,
        probes: total_probes,
        groups: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::tensor::Tensor;

    #[test]
    fn pure_linear_model_checks_below_1e9() {
        let mut rng = SplitMix64::new(3);
        let mut reg = ParamRegistry::<f64>::new(3);
        let w = reg
            .add(
                "lin.w",
                Tensor::from_vec(&[3, 2], (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect())
                    .unwrap(),
            )
            .unwrap();
        let x = Tensor::from_vec(&[2, 3], (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();

        let report = grad_check(
            |reg| {
                let mut tape = Tape::new();
                let wv = tape.param(reg, w);
                let xv = tape.constant(x.clone());
                let y = tape.matmul(xv, wv)?;
                let loss = tape.sum(y);
                Ok((tape, loss))
            },
            &mut reg,
            &GradCheckOptions {
                probes: 6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            report.max_relative_error < 1e-9,
            "linear model should be exact up to roundoff, got {}",
            report.max_relative_error
        );
    }

    #[test]
    fn corruption_hook_trips_the_detector() {
        let mut reg = ParamRegistry::<f64>::new(0);
        let w = reg
            .add("w", Tensor::from_vec(&[1, 1], vec![0.7]).unwrap())
            .unwrap();
        let opts = GradCheckOptions {
            probes: 1,
            corrupt_backward: true,
            ..Default::default()
        };
        let report = grad_check(
            |reg| {
                let mut tape = Tape::new();
                let wv = tape.param(reg, w);
                let sq = tape.matmul(wv, wv)?; // 1x1 . 1x1
                let loss = tape.sum(sq);
                Ok((tape, loss))
            },
            &mut reg,
            &opts,
        )
        .unwrap();
        assert!(!report.passes(1e-4));
    }

    #[test]
    fn mixer_block_alone_checks_below_1e4() {
        use crate::layers::{mixer_block, MixerVars};
        use crate::rng::SplitMix64;

        let (n_max, d, h_tok, h_ch) = (4usize, 5usize, 3usize, 6usize);
        let mut rng = SplitMix64::new(8);
        let mut rand = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(-0.8, 0.8)).collect()).unwrap()
        };
        let mut reg = ParamRegistry::<f64>::new(8);
        let x = reg.add("x", rand(&[n_max, d])).unwrap();
        let ln1g = reg.add("mx.ln1.gamma", rand(&[d])).unwrap();
        let ln1b = reg.add("mx.ln1.beta", rand(&[d])).unwrap();
        let tw1 = reg.add("mx.token.w1", rand(&[n_max, h_tok])).unwrap();
        let tb1 = reg.add("mx.token.b1", rand(&[h_tok])).unwrap();
        let tw2 = reg.add("mx.token.w2", rand(&[h_tok, n_max])).unwrap();
        let tb2 = reg.add("mx.token.b2", rand(&[n_max])).unwrap();
        let ln2g = reg.add("mx.ln2.gamma", rand(&[d])).unwrap();
        let ln2b = reg.add("mx.ln2.beta", rand(&[d])).unwrap();
        let cw1 = reg.add("mx.channel.w1", rand(&[d, h_ch])).unwrap();
        let cb1 = reg.add("mx.channel.b1", rand(&[h_ch])).unwrap();
        let cw2 = reg.add("mx.channel.w2", rand(&[h_ch, d])).unwrap();
        let cb2 = reg.add("mx.channel.b2", rand(&[d])).unwrap();
        let mask = vec![true, true, true, false];

        let report = grad_check(
            |reg| {
                let mut tape = Tape::new();
                let vars = MixerVars {
                    ln1_gamma: tape.param(reg, ln1g),
                    ln1_beta: tape.param(reg, ln1b),
                    tok_w1: tape.param(reg, tw1),
                    tok_b1: tape.param(reg, tb1),
                    tok_w2: tape.param(reg, tw2),
                    tok_b2: tape.param(reg, tb2),
                    ln2_gamma: tape.param(reg, ln2g),
                    ln2_beta: tape.param(reg, ln2b),
                    ch_w1: tape.param(reg, cw1),
                    ch_b1: tape.param(reg, cb1),
                    ch_w2: tape.param(reg, cw2),
                    ch_b2: tape.param(reg, cb2),
                };
                let xv = tape.param(reg, x);
                let out = mixer_block(
                    &mut tape,
                    xv,
                    &mask,
                    n_max,
                    &vars,
                    1e-5,
                    crate::tape::Activation::Gelu,
                )?;
                let loss = tape.sum(out);
                Ok((tape, loss))
            },
            &mut reg,
            &GradCheckOptions {
                probes: 120,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            report.max_relative_error < 1e-4,
            "mixer block gradcheck: {:.3e}",
            report.max_relative_error
        );
    }

    #[test]
    fn full_layer_alone_checks_below_1e4() {
        use crate::data::{pad_batch, synth};
        use crate::layers::{gmn_layer, LayerVars, MixerVars};
        use crate::rng::SplitMix64;

        let graph = synth::probe_graph(5, 3);
        let n_max = 5;
        let batch = pad_batch(std::slice::from_ref(&graph), n_max).unwrap();
        let wiring = batch.edges();
        let (d, d_e, h_tok, h_ch) = (6usize, 3usize, 4usize, 5usize);

        let mut rng = SplitMix64::new(12);
        let mut rand = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            Tensor::from_vec(shape, (0..n).map(|_| rng.uniform(-0.6, 0.6)).collect()).unwrap()
        };
        let mut reg = ParamRegistry::<f64>::new(12);
        let h0 = reg.add("h0", rand(&[n_max, d])).unwrap();
        let bonds = reg.add("bond_table", rand(&[4, d_e])).unwrap();
        let pre_w = reg.add("layer.pretransform.weight", rand(&[2 * d + d_e, d])).unwrap();
        let pre_b = reg.add("layer.pretransform.bias", rand(&[d])).unwrap();
        let post_w = reg.add("layer.posttransform.weight", rand(&[9 * d, d])).unwrap();
        let post_b = reg.add("layer.posttransform.bias", rand(&[d])).unwrap();
        let ln1g = reg.add("layer.mixer.ln1.gamma", rand(&[d])).unwrap();
        let ln1b = reg.add("layer.mixer.ln1.beta", rand(&[d])).unwrap();
        let tw1 = reg.add("layer.mixer.token.w1", rand(&[n_max, h_tok])).unwrap();
        let tb1 = reg.add("layer.mixer.token.b1", rand(&[h_tok])).unwrap();
        let tw2 = reg.add("layer.mixer.token.w2", rand(&[h_tok, n_max])).unwrap();
        let tb2 = reg.add("layer.mixer.token.b2", rand(&[n_max])).unwrap();
        let ln2g = reg.add("layer.mixer.ln2.gamma", rand(&[d])).unwrap();
        let ln2b = reg.add("layer.mixer.ln2.beta", rand(&[d])).unwrap();
        let cw1 = reg.add("layer.mixer.channel.w1", rand(&[d, h_ch])).unwrap();
        let cb1 = reg.add("layer.mixer.channel.b1", rand(&[h_ch])).unwrap();
        let cw2 = reg.add("layer.mixer.channel.w2", rand(&[h_ch, d])).unwrap();
        let cb2 = reg.add("layer.mixer.channel.b2", rand(&[d])).unwrap();

        let report = grad_check(
            |reg| {
                let mut tape = Tape::new();
                let vars = LayerVars {
                    pre_w: tape.param(reg, pre_w),
                    pre_b: tape.param(reg, pre_b),
                    post_w: tape.param(reg, post_w),
                    post_b: tape.param(reg, post_b),
                    mixer: MixerVars {
                        ln1_gamma: tape.param(reg, ln1g),
                        ln1_beta: tape.param(reg, ln1b),
                        tok_w1: tape.param(reg, tw1),
                        tok_b1: tape.param(reg, tb1),
                        tok_w2: tape.param(reg, tw2),
                        tok_b2: tape.param(reg, tb2),
                        ln2_gamma: tape.param(reg, ln2g),
                        ln2_beta: tape.param(reg, ln2b),
                        ch_w1: tape.param(reg, cw1),
                        ch_b1: tape.param(reg, cb1),
                        ch_w2: tape.param(reg, cw2),
                        ch_b2: tape.param(reg, cb2),
                    },
                };
                let h = tape.param(reg, h0);
                let bond_table = tape.param(reg, bonds);
                let out = gmn_layer(
                    &mut tape,
                    h,
                    &wiring.dst_rows,
                    &wiring.src_rows,
                    &wiring.bond_ids,
                    &batch.degrees,
                    &batch.node_mask,
                    n_max,
                    0.9,
                    bond_table,
                    &vars,
                    1e-5,
                    crate::tape::Activation::Gelu,
                )?;
                let loss = tape.sum(out);
                Ok((tape, loss))
            },
            &mut reg,
            &GradCheckOptions {
                probes: 150,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            report.max_relative_error < 1e-4,
            "full layer gradcheck: {:.3e}",
            report.max_relative_error
        );
    }

    #[test]
    fn groups_cover_every_name_prefix() {
        let mut reg = ParamRegistry::<f64>::new(0);
        let a = reg.add("enc.w", Tensor::scalar(0.5)).unwrap();
        let b = reg.add("enc.b", Tensor::scalar(0.1)).unwrap();
        let c = reg.add("head", Tensor::scalar(-0.2)).unwrap();
        let report = grad_check(
            |reg| {
                let mut tape = Tape::new();
                let av = tape.param(reg, a);
                let bv = tape.param(reg, b);
                let cv = tape.param(reg, c);
                let s1 = tape.add(av, bv)?;
                let s2 = tape.add(s1, cv)?;
                let loss = tape.sum(s2);
                Ok((tape, loss))
            },
            &mut reg,
            &GradCheckOptions {
                probes: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let names: Vec<&str> = report.groups.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(names, ["enc", "head"]);
    }
}
