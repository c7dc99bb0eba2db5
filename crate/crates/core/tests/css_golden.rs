use jselide_core::{elide_css, SourceSpan};
use serde::Deserialize;

#[derive(Deserialize)]
struct Fixture {
    name: String,
    css: String,
    used: Vec<[usize; 2]>,
    expected: String,
}

fn fixtures() -> Vec<Fixture> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/css/fixtures.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn matches_oracle_outputs() {
    let fixtures = fixtures();
    assert!(fixtures.len() >= 10);
    assert!(fixtures.iter().any(|f| f.used.is_empty()));
    assert!(fixtures.iter().any(|f| f.used == [[0, f.css.len()]]));
    for f in &fixtures {
        let used: Vec<SourceSpan> = f.used.iter().map(|[s, e]| SourceSpan::new(*s, *e)).collect();
        assert_eq!(elide_css(&f.css, &used).unwrap(), f.expected, "{}", f.name);
    }
}
