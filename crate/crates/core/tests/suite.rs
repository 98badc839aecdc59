mod common;

use kernelcost::ir::validate;
use kernelcost::props::{extract_properties, schema};
use kernelcost::sim::enumerate_points;
use kernelcost::suite::{Role, Suite, DEFAULT_PROFILE};
use kernelcost::{Binding, GroupConfig};

fn bound(id: &str, group: &str, b: &str, cap: u64) -> kernelcost::props::PropertyVector {
    let s = Suite::bundled();
    let k = s.instantiate(id, group.parse().unwrap()).unwrap();
    let b: Binding = b.parse().unwrap();
    let tally = enumerate_points(&k, &b, cap).unwrap();
    let pv = extract_properties(&k, Some(&b)).unwrap();
    assert_eq!(pv, tally.properties);
    pv
}

#[test]
fn every_kernel_validates_cleanly() {
    let s = Suite::bundled();
    for k in s.kernels() {
        for p in s.profiles() {
            for g in s.groups_for(&k.id, p).unwrap() {
                let ir = s.instantiate(&k.id, g).unwrap();
                assert!(validate(&ir).is_empty(), "{} {g}", k.id);
            }
        }
    }
}

#[test]
fn case_matrices_are_admissible() {
    let s = Suite::bundled();
    for p in s.profiles() {
        for case in s
            .measurement_cases(p)
            .unwrap()
            .iter()
            .chain(&s.test_cases(p).unwrap())
        {
            let k = s.instantiate(&case.kernel, case.group).unwrap();
            kernelcost::props::check_binding(&k, &case.binding).unwrap();
        }
    }
}

#[test]
fn measurement_columns_cover_test_kernels() {
    let s = Suite::bundled();
    for p in s.profiles() {
        let mut seen = vec![false; schema().len()];
        let mut needed = vec![false; schema().len()];
        for case in s
            .measurement_cases(p)
            .unwrap()
            .iter()
            .chain(&s.test_cases(p).unwrap())
        {
            let k = s.instantiate(&case.kernel, case.group).unwrap();
            let pv = extract_properties(&k, Some(&case.binding)).unwrap();
            let into = if case.role == Role::Measurement {
                &mut seen
            } else {
                &mut needed
            };
            for (i, (_, v)) in pv.iter().enumerate() {
                into[i] |= !v.is_zero();
            }
        }
        for (i, key) in schema().iter().enumerate() {
            assert!(!needed[i] || seen[i], "{p}: `{key}` is never measured");
        }
    }
}

#[test]
fn stride1_four_loads() {
    let pv = bound("add4", "256", "n=4096", 1_000_000);
    assert_eq!(pv.count("mem.global.load.s32.1/1"), Some(4 * 4096));
    assert_eq!(pv.count("mem.global.store.s32.1/1"), Some(4096));
    assert_eq!(pv.count("mem.minls.s32.1/1"), Some(4096));
}

#[test]
fn arith_div_per_point() {
    let (n, nk) = (20u64, 30u64);
    let pv = bound("arith_div", "16x12", &format!("n={n};nk={nk}"), 1_000_000);
    assert_eq!(pv.count("flop.f32.div"), Some(7 * n * n * nk));
    assert_eq!(pv.count("flop.f32.addsub"), Some(n * n * nk));
}

#[test]
fn vscale_strides() {
    let pv = bound("vscale_add_s2", "256", "n=1000", 1_000_000);
    assert_eq!(pv.count("mem.global.load.s32.2/2"), Some(2000));
    assert_eq!(pv.count("mem.global.load.s32.uniform"), Some(2000));
    // x[3i] touches n of 3n - 2 cells, just over a third
    let pv = bound("vscale_add_s3", "256", "n=1000", 1_000_000);
    assert_eq!(pv.count("mem.global.load.s32.2/3"), Some(2000));
}

#[test]
fn convolution_multiplies() {
    let n = 64u64;
    let pv = bound("convolution", "16x16", &format!("n={n}"), 10_000_000);
    assert!(pv.count("flop.f32.mul").unwrap() >= 441 * n * n);
    assert_eq!(pv.count("flop.f32.mul"), Some(3 * 441 * n * n));
    assert_eq!(pv.count("mem.global.load.s32.3/3"), Some(3 * 441 * n * n));
    assert_eq!(
        pv.count("mem.global.load.s32.uniform"),
        Some(3 * 441 * n * n)
    );
}

#[test]
fn skinny_matmul_tile_loads() {
    let (n, m, l) = (64u64, 512u64, 64u64);
    let pv = bound(
        "skinny_matmul",
        "16x16",
        &format!("n={n};m={m};l={l}"),
        10_000_000,
    );
    // each of the n*l work items loads one element of a and of b per tile step
    assert_eq!(
        pv.count("mem.global.load.s32.1/1"),
        Some(2 * n * l * (m / 16))
    );
    assert_eq!(pv.count("sync.barrier"), Some(n * l * (m / 16)));
}

#[test]
fn finite_difference_halo() {
    let n = 256u64;
    let pv = bound("finite_diff", "16x16", &format!("n={n}"), 10_000_000);
    let loads = pv.count("mem.global.load.s32.1/1").unwrap()
        + pv.count("mem.global.load.s32.4/>4").unwrap();
    let groups = (n / 16) * (n / 16);
    // interior plus source term twice, plus four 16-cell halo strips per group
    assert_eq!(loads, 3 * n * n + 4 * 16 * groups);
    assert!(loads > 3 * n * n);
}

#[test]
fn empty_has_six_sizes_and_no_work() {
    let s = Suite::bundled();
    assert_eq!(s.kernel("empty").unwrap().cases.len(), 6);
    let pv = bound("empty", "16x16", "n=512", 1);
    assert_eq!(pv.count("launch.groups"), Some(1024));
    let nonzero: Vec<_> = pv
        .iter()
        .filter(|(_, v)| !v.is_zero())
        .map(|(k, _)| k)
        .collect();
    assert_eq!(nonzero, ["launch.groups", "launch.const"]);
}

#[test]
fn barriers_divide_by_group_size() {
    let s = Suite::bundled();
    for case in s.measurement_cases(DEFAULT_PROFILE).unwrap() {
        let k = s.instantiate(&case.kernel, case.group).unwrap();
        let pv = extract_properties(&k, Some(&case.binding)).unwrap();
        let threads = case.group.threads() as u64;
        assert_eq!(
            pv.count("sync.barrier").unwrap() % threads,
            0,
            "{}",
            case.kernel
        );
    }
}

#[test]
fn emit_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let s = Suite::bundled();
    let files = s.emit(dir.path(), false).unwrap();
    assert_eq!(files.len(), s.kernels().len() + 1);
    assert_eq!(s.emit(dir.path(), false).unwrap_err().code(), "E_IO");
    s.emit(dir.path(), true).unwrap();
    let back = Suite::from_dir(dir.path()).unwrap();
    assert_eq!(
        back.measurement_cases("Tesla").unwrap(),
        s.measurement_cases("Tesla").unwrap()
    );
    let g = GroupConfig(16, 16);
    assert_eq!(
        back.instantiate("nbody", GroupConfig::one_d(256)).unwrap(),
        s.instantiate("nbody", GroupConfig::one_d(256)).unwrap()
    );
    assert!(back.instantiate("matmul_tiled", g).is_ok());
}
