use std::path::Path;

use uwbjam::phy::CodeTable;
use uwbjam::sim::Scenario;

#[test]
fn shipped_scenarios_load_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let sc = Scenario::load(&path).unwrap();
            sc.validate(CodeTable::builtin()).unwrap();
            let again = Scenario::from_toml(&sc.to_toml().unwrap()).unwrap();
            assert_eq!(again, sc, "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 2);
}
