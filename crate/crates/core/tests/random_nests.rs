use kernelcost::ir::parse_kernel;
use kernelcost::props::{evaluate_properties, extract_properties};
use kernelcost::sim::enumerate_points;
use kernelcost::Binding;
use proptest::prelude::*;

/// An affine bound over the parameters and enclosing loop variables.
fn bound(vars: &'static [&'static str]) -> impl Strategy<Value = String> {
    (
        prop::collection::vec(-1i64..=2, vars.len()),
        -2i64..=3,
        prop::bool::weighted(0.2),
    )
        .prop_map(move |(coeffs, c, halve)| {
            let mut s = c.to_string();
            for (v, k) in vars.iter().zip(coeffs) {
                if k != 0 {
                    s.push_str(&format!(" + {k}*{v}"));
                }
            }
            if halve {
                format!("({s}) / 2")
            } else {
                s
            }
        })
}

fn nest() -> impl Strategy<Value = String> {
    (
        bound(&["n"]),
        bound(&["n", "m"]),
        bound(&["n", "i"]),
        bound(&["n", "m", "i"]),
        prop::option::of(bound(&["n", "i", "j"])),
        prop::bool::ANY,
    )
        .prop_map(|(lo1, hi1, lo2, hi2, guard, barrier)| {
            let mut s = String::from(
                "kernel nest\nparam n, m\narray a : f32[4] global row_major out\narray b : f32[64] global row_major in\n",
            );
            s += &format!("loop i = {lo1} .. {hi1}\nloop j = {lo2} .. {hi2}\n");
            if let Some(g) = &guard {
                s += &format!("guard {g} >= 0\n");
            }
            s += "a[1] = b[j - i + 20] * 2.0 + 1.0\n";
            if barrier {
                s += "barrier\n";
            }
            if guard.is_some() {
                s += "end\n";
            }
            s += "end\nend\n";
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn symbolic_and_bound_counts_match_enumeration(src in nest(), n in 0i64..12, m in 0i64..12) {
        let k = parse_kernel(&src).unwrap();
        let b = Binding::new().with("n", n).with("m", m);
        let tally = enumerate_points(&k, &b, 1_000_000).unwrap();
        prop_assert_eq!(&extract_properties(&k, Some(&b)).unwrap(), &tally.properties, "{}", src);
        if let Ok(pv) = extract_properties(&k, None) {
            prop_assert_eq!(&evaluate_properties(&k, &pv, &b).unwrap(), &tally.properties, "{}", src);
        }
    }

    #[test]
    fn binding_text_round_trips(pairs in prop::collection::btree_map("[a-z][a-z0-9_]{0,5}", 0i64..1_000_000, 0..5)) {
        let b: Binding = pairs.into_iter().collect();
        prop_assert_eq!(b.to_string().parse::<Binding>().unwrap(), b);
    }
}
