use std::path::PathBuf;

use proptest::option;
use proptest::prelude::*;
use vifem::TauRule;
use vifem_cli::config::{BoundsOverride, PdasOptions};
use vifem_cli::RunConfig;

fn tau_rule() -> impl Strategy<Value = TauRule> {
    prop_oneof![
        (1e-3f64..1e3).prop_map(TauRule::MeshFraction),
        (1e-9f64..1.0).prop_map(TauRule::Fixed),
    ]
}

fn bounds() -> impl Strategy<Value = BoundsOverride> {
    (option::of(-10.0f64..0.0), option::of(0.5f64..10.0)).prop_map(|(lower, upper)| BoundsOverride { lower, upper })
}

prop_compose! {
    fn run_config()(
        case in prop::sample::select(vec!["stationary_smooth", "lubrication_accuracy", "ch_accuracy", "porous_medium"]),
        m in option::of(1.5f64..8.0),
        p in 1usize..=4,
        k in 1usize..=5,
        cells in prop::collection::vec(1usize..200, 1..5),
        tau in tau_rule(),
        tol_relax in option::of(0.0f64..1e-6),
        bounds in option::of(bounds()),
        c in 1e-6f64..10.0,
        max_iter in 1usize..100,
        kkt_tol in 1e-14f64..1e-4,
        out in option::of("[a-z]{1,8}(/[a-z]{1,8})?"),
        jobs in option::of(1usize..16),
        warmup_substeps in option::of(1usize..8),
    ) -> RunConfig {
        RunConfig {
            case: case.to_string(),
            parameter: if case == "porous_medium" { m } else { None },
            p,
            k,
            cells,
            tau,
            tol_relax,
            bounds,
            pdas: PdasOptions { c, max_iter, kkt_tol },
            seed: None,
            out: out.map(PathBuf::from),
            jobs,
            warmup_substeps,
        }
    }
}

proptest! {
    #[test]
    fn configs_survive_a_write_and_read(cfg in run_config()) {
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn seeded_configs_survive_a_write_and_read(seed in any::<u64>(), cells in 1usize..64) {
        let cfg = RunConfig::from_json(&format!(r#"{{"case": "ch_logarithmic", "seed": {seed}, "cells": [{cells}]}}"#)).unwrap();
        prop_assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
