//! Checked-in weights must stay reproducible from their generators.

use lbb::flow::weights::{load_weights, to_bytes};
use lbb::flow::{ActNorm, FlowLayer, FlowModel};
use lbb::toy;

fn fixture(name: &str) -> FlowModel {
    load_weights(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn narrow16() -> FlowModel {
    let mut layers = vec![FlowLayer::ActNorm(ActNorm { scale: vec![1.0 / 1.5; 16], bias: vec![-128.0 / 1.5; 16] })];
    layers.extend(toy::random_model(16, 6, 1).layers);
    FlowModel::new(16, layers).unwrap()
}

#[test]
fn fixtures_match_generators() {
    let cases = [
        ("composite16.lbbw", toy::random_model(16, 6, 1)),
        ("narrow16.lbbw", narrow16()),
        ("realnvp4.lbbw", toy::realnvp(4, 6, 2, 5)),
        ("byte16.lbbw", toy::byte_model(16, 4, 7)),
    ];
    for (name, model) in cases {
        assert_eq!(to_bytes(&fixture(name)), to_bytes(&model), "{name}");
    }
}
