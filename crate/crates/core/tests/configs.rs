use std::path::Path;

use rtnet::config::RunConfig;

fn load(name: &str) -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn desk_config_spells_out_the_defaults() {
    assert_eq!(load("desk.toml"), RunConfig::default());
}

#[test]
fn full_config_parses() {
    let c = load("full.toml");
    assert_eq!(c.train.batch_size, 128);
    assert_eq!(c.train.iterations, 15000);
    assert_eq!(c.model.master_hidden, 1024);
    assert_eq!(c.model.emb_dim, 300);
}
