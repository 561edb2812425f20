use super::*;
use crate::dispatch::StrategyKind;

const MIN: &str = r#"
horizon_ms = 1000

[cluster]
nodes = 1

[workload]
functions = [{ name = "f", flavor = 128, compute_ms = 50 }]

[strategy]
name = "round_robin"
"#;

fn parse(text: &str) -> Scenario {
    Scenario::parse(text, &[]).unwrap()
}

fn keys(diags: &[Diagnostic]) -> Vec<&str> {
    diags.iter().map(|d| d.key.as_str()).collect()
}

#[test]
fn minimal_config_is_valid() {
    let s = parse(MIN);
    assert!(s.diagnostics().is_empty(), "{:?}", s.diagnostics());
    assert_eq!(s.seeds, [1]);
    assert_eq!(s.workload.horizon_ms, 1000);
    assert_eq!(s.cluster.container_boot_ms, 100);
    assert_eq!(s.strategy.choices().unwrap()[0].kind, StrategyKind::RoundRobin);
}

#[test]
fn zipf_zero_names_the_key() {
    let text = MIN.replace(
        "[strategy]",
        "objects = { count = 4, size = { fixed = 10 }, popularity = { zipf = { s = 0.0 } } }\n\n[strategy]",
    );
    let s = parse(&text);
    let diags = s.diagnostics();
    assert_eq!(keys(&diags), ["workload.objects.popularity"]);
    assert!(diags[0].is_error());
}

#[test]
fn small_store_is_a_warning() {
    let text = MIN
        .replace("nodes = 1", "nodes = 1\nstore_capacity = 50")
        .replace(
            "[strategy]",
            "objects = { count = 2, size = { fixed = 100 }, popularity = \"uniform\" }\n\n[strategy]",
        );
    let diags = parse(&text).diagnostics();
    assert_eq!(keys(&diags), ["cluster.store_capacity"]);
    assert_eq!(diags[0].severity, Severity::Warning);
}

#[test]
fn unknown_strategy_lists_the_registry() {
    let s = parse(&MIN.replace("round_robin", "fastest"));
    let diags = s.errors();
    assert_eq!(keys(&diags), ["strategy.name"]);
    for name in StrategyKind::REGISTRY {
        assert!(diags[0].message.contains(name), "{}", diags[0].message);
    }
}

#[test]
fn unknown_keys_are_rejected_with_their_path() {
    for (section, bad) in [
        ("[strategy]", "[strategy]\nbogus = 1"),
        ("[cluster]", "[cluster]\nnodez = 2"),
        ("[strategy]", "[strategy.params]\nw_cod = 0.3\n[strategy]"),
    ] {
        let diags = Scenario::parse(&MIN.replacen(section, bad, 1), &[]).unwrap_err();
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("unknown field"), "{}", diags[0]);
    }
    let diags = Scenario::parse(&MIN.replace("nodes = 1", "nodes = \"four\""), &[]).unwrap_err();
    assert_eq!(diags[0].key, "cluster.nodes");
}

#[test]
fn overrides_patch_dotted_paths() {
    let s = Scenario::parse(
        MIN,
        &[
            "cluster.nodes=8".into(),
            "strategy.name=data_aware".into(),
            "strategy.params.w_load = 0.4".into(),
            "seeds=[1,2,3]".into(),
        ],
    )
    .unwrap();
    assert_eq!(s.cluster.nodes, 8);
    assert_eq!(s.strategy.name.as_deref(), Some("data_aware"));
    assert_eq!(s.strategy.params.w_load, 0.4);
    assert_eq!(s.seeds, [1, 2, 3]);
    assert!(Scenario::parse(MIN, &["cluster.nodes".into()]).is_err());
    assert!(Scenario::parse(MIN, &["horizon_ms.x=1".into()]).is_err());
}

#[test]
fn semantic_errors_are_all_reported() {
    let text = MIN
        .replace("horizon_ms = 1000", "horizon_ms = 1000\nseeds = []")
        .replace("flavor = 128", "flavor = 100")
        .replace("name = \"round_robin\"", "names = [\"round_robin\", \"work_stealing\"]");
    let diags = parse(&text).errors();
    assert_eq!(
        keys(&diags),
        ["seeds", "workload.functions[0].flavor", "strategy.names[1]"]
    );
}

#[test]
fn work_stealing_flag_layers_on_every_strategy() {
    let text = MIN.replace(
        "name = \"round_robin\"",
        "names = [\"round_robin\", \"hash_affinity\"]\nwork_stealing = true",
    );
    let choices = parse(&text).strategy.choices().unwrap();
    assert!(choices.iter().all(|c| c.work_stealing));
    assert_eq!(choices[1].label(), "hash_affinity+work_stealing");
}

#[test]
fn metadata_echoes_every_constant() {
    let meta = parse(MIN).metadata();
    let get = |k: &str| meta.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
    assert_eq!(get("cluster.container_boot_ms"), Some("100"));
    assert_eq!(get("cluster.keep_alive_ms"), Some("600000"));
    assert_eq!(get("cluster.max_execution_ms"), Some("300000"));
    assert_eq!(get("cluster.billing_granularity_ms"), Some("100"));
    assert_eq!(get("cluster.network.latency_ms"), Some("1"));
    assert_eq!(get("cluster.network.bandwidth_mb_per_s"), Some("100"));
    assert_eq!(get("strategy.params.w_data"), Some("0.5"));
    assert_eq!(get("rng"), Some("ChaCha8"));
    assert!(meta.iter().all(|(k, _)| !k.starts_with("output.")));
    assert!(meta.windows(2).all(|w| w[0].0 <= w[1].0));
}

#[test]
fn relative_trace_paths_follow_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.jsonl"), "").unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, MIN.replace("[strategy]", "trace = \"t.jsonl\"\n\n[strategy]")).unwrap();
    let s = Scenario::load(&cfg, &[]).unwrap();
    assert_eq!(s.workload.trace.as_deref(), Some(dir.path().join("t.jsonl").as_path()));
    assert!(s.errors().is_empty());
}
