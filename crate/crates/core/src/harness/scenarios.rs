//! Sub-run lists for each scenario.

use super::run::{Recipe, RunSpec};
use super::world::{DeskWorld, FAMILY_B, SUPERVISED_ORDER, ZERO};
use super::{ExperimentConfig, Scenario};
use crate::selftrain::Mixture;

/// Back-translation and self-training only.
pub fn ibt_only() -> Mixture {
    Mixture {
        back_translation: 0.5,
        self_training: 0.5,
        parallel: 0.0,
        mass: 0.0,
    }
}

fn all_four(w: &DeskWorld) -> Vec<(&'static str, usize)> {
    SUPERVISED_ORDER.iter().map(|l| (*l, w.parallel_sentences)).collect()
}

/// The zero-resource model: four supervised languages, mono-only `a3`.
pub fn zero_resource(w: &DeskWorld, seed: u64) -> RunSpec {
    RunSpec::cotrain("zero", seed, &all_four(w), &[ZERO], w.mono_sentences)
}

pub fn subruns(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let w = &cfg.world;
    let s0 = cfg.seeds[0];
    let m = w.mono_sentences;
    match cfg.scenario {
        Scenario::E1 => {
            let mut zero = zero_resource(w, s0);
            zero.ibt = Some(Mixture::default());
            let no_mono = RunSpec {
                name: "no_mono".into(),
                ibt: Some(Mixture::default()),
                ..RunSpec::cotrain("", s0, &all_four(w), &[], m)
            };
            let supervised = RunSpec {
                name: "supervised".into(),
                mono: Vec::new(),
                ..RunSpec::cotrain("", s0, &[(ZERO, w.parallel_total)], &[], m)
            };
            vec![supervised, zero, no_mono]
        }
        Scenario::E2 => {
            let mut out = Vec::new();
            for &seed in &cfg.seeds {
                for k in [1usize, 2, 4] {
                    let sup: Vec<(&str, usize)> =
                        SUPERVISED_ORDER[..k].iter().map(|l| (*l, w.parallel_total / k)).collect();
                    out.push(RunSpec::cotrain(&format!("k{k}"), seed, &sup, &[ZERO], m));
                }
            }
            out
        }
        Scenario::E3 => {
            let mut out = Vec::new();
            for &seed in &cfg.seeds {
                for k in [1usize, 2, 4] {
                    let sup: Vec<(&str, usize)> =
                        SUPERVISED_ORDER[..k].iter().map(|l| (*l, w.parallel_sentences)).collect();
                    let mut mono_only: Vec<&str> = SUPERVISED_ORDER[k..].to_vec();
                    mono_only.push(ZERO);
                    out.push(RunSpec::cotrain(&format!("k{k}"), seed, &sup, &mono_only, m));
                }
            }
            out
        }
        Scenario::E4 => {
            let half = w.parallel_total / 2;
            [("similar", ["a1", "a2"]), ("mixed", ["a1", "b1"]), ("dissimilar", ["b1", "b2"])]
                .iter()
                .map(|(name, langs)| {
                    let sup: Vec<(&str, usize)> = langs.iter().map(|l| (*l, half)).collect();
                    RunSpec::cotrain(name, s0, &sup, &[ZERO], m)
                })
                .collect()
        }
        Scenario::E5 => {
            let mut out = Vec::new();
            for n in [m / 5, m / 2, m] {
                let mut r = zero_resource(w, s0);
                r.name = format!("mono{n}");
                r.mono.iter_mut().filter(|(l, _)| l == ZERO).for_each(|e| e.1 = n);
                out.push(r);
            }
            for n in [w.parallel_sentences / 5, w.parallel_sentences / 2] {
                let sup: Vec<(&str, usize)> = SUPERVISED_ORDER.iter().map(|l| (*l, n)).collect();
                out.push(RunSpec::cotrain(&format!("para{n}"), s0, &sup, &[ZERO], m));
            }
            out
        }
        Scenario::E6 => {
            let half = w.parallel_total / 2;
            let mut out = Vec::new();
            for para in ["news", "bible"] {
                for mono in ["news", "bible"] {
                    let mut r = RunSpec::cotrain(&format!("para_{para}_mono_{mono}"), s0, &[("a1", half), ("a2", half)], &[ZERO], m);
                    r.parallel_domain = para.into();
                    r.mono_domain = mono.into();
                    out.push(r);
                }
            }
            out
        }
        Scenario::E7 => {
            let cotrain = zero_resource(w, s0);
            let pretrain = RunSpec {
                name: "pretrain_finetune".into(),
                recipe: Recipe::PretrainFinetune,
                ..cotrain.clone()
            };
            let with_ibt = RunSpec {
                name: "cotrain_ibt".into(),
                ibt: Some(Mixture::default()),
                ..cotrain.clone()
            };
            let ibt_alone = RunSpec {
                name: "cotrain_ibt_only".into(),
                ibt: Some(ibt_only()),
                ..cotrain.clone()
            };
            vec![RunSpec { name: "cotrain".into(), ..cotrain }, pretrain, with_ibt, ibt_alone]
        }
        Scenario::F2 => {
            let mut r = RunSpec::cotrain("zero_pair", s0, &all_four(w), &[ZERO, FAMILY_B[2]], m);
            r.mono.iter_mut().filter(|(l, _)| l == FAMILY_B[2]).for_each(|e| e.1 = m / 5);
            r.evaluate = vec![ZERO.into(), FAMILY_B[2].into()];
            vec![r]
        }
    }
}
