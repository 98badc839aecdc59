mod common;

use kernelcost::props::{extract_properties, DEFAULT_CAP};
use kernelcost::sim::enumerate_points;
use kernelcost::suite::Suite;
use kernelcost::Binding;

#[test]
fn bound_extraction_matches_enumeration() {
    let n = common::oracle_sweep(&Suite::bundled(), 20, 11).unwrap();
    assert_eq!(n, 20 * Suite::bundled().kernels().len());
}

#[test]
fn symbolic_counts_match_enumeration() {
    let (kernels, n) = common::symbolic_sweep(&Suite::bundled(), 10, 12).unwrap();
    assert_eq!(kernels, Suite::bundled().kernels().len());
    assert_eq!(n, 10 * kernels);
}

#[test]
fn copy_at_1024() {
    let s = Suite::bundled();
    let k = s.instantiate("copy", "256".parse().unwrap()).unwrap();
    let b = Binding::new().with("n", 1024);
    let tally = enumerate_points(&k, &b, DEFAULT_CAP).unwrap();
    assert_eq!(tally.points, 1024);
    assert_eq!(extract_properties(&k, Some(&b)).unwrap(), tally.properties);
}
