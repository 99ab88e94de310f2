use sgfv_core::scenario::{load_scenario, run, verify_store};

#[test]
fn densities_above_cap_still_satisfy_the_bounds() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/stress_pnp.toml");
    let store = run(&load_scenario(path).unwrap()).unwrap();
    assert!(store.complete);
    let v = verify_store(&store, None).unwrap();
    assert!(v.passed(), "{}", v.to_text());
    let report = store.moser.as_ref().unwrap();
    assert!(report.sup_nm > 0.1, "stripe should push N above M");
    assert!(report.levels.iter().all(|l| l.sup_measured > 0.0));
    assert!(report.passed(), "{}", report.to_text());
    assert!(report.constants.kappa >= report.sup_nm);
}

#[test]
fn shipped_scenarios_load() {
    for name in ["minimal", "pn_junction", "stress_pnp"] {
        let path = format!("{}/../../scenarios/{name}.toml", env!("CARGO_MANIFEST_DIR"));
        load_scenario(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
