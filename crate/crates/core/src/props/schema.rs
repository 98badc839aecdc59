use std::collections::HashMap;
use std::fmt;
use std::sync::OnceLock;

use crate::ir::Dtype;

/// Bumped whenever the key list below changes.
pub const SCHEMA_VERSION: &str = "1";

pub const SIZES: [&str; 3] = ["s32", "s64", "s128"];
pub const CLASSES: [&str; 15] = [
    "uniform", "1/1", "1/2", "2/2", "1/3", "2/3", "3/3", "1/4", "2/4", "3/4", "4/4", "1/>4",
    "2/>4", "3/>4", "4/>4",
];
pub const FLOP_KINDS: [&str; 5] = ["addsub", "mul", "div", "pow", "special"];

pub const LOCAL_LOAD: &str = "mem.local.load";
pub const BARRIER: &str = "sync.barrier";
pub const GROUPS: &str = "launch.groups";
pub const CONST: &str = "launch.const";

/// All property keys in their fixed order.
pub fn schema() -> &'static [String] {
    static KEYS: OnceLock<Vec<String>> = OnceLock::new();
    KEYS.get_or_init(|| {
        let mut keys = Vec::new();
        for dir in ["load", "store"] {
            for size in SIZES {
                for class in CLASSES {
                    keys.push(format!("mem.global.{dir}.{size}.{class}"));
                }
            }
        }
        for size in SIZES {
            for class in CLASSES {
                keys.push(format!("mem.minls.{size}.{class}"));
            }
        }
        keys.push(LOCAL_LOAD.to_string());
        for dtype in ["f32", "f64"] {
            for kind in FLOP_KINDS {
                keys.push(format!("flop.{dtype}.{kind}"));
            }
        }
        keys.push(BARRIER.to_string());
        keys.push(GROUPS.to_string());
        keys.push(CONST.to_string());
        keys
    })
}

/// Position of a key in [`schema`].
pub fn key_index(key: &str) -> Option<usize> {
    static INDEX: OnceLock<HashMap<&'static str, usize>> = OnceLock::new();
    INDEX
        .get_or_init(|| {
            schema()
                .iter()
                .enumerate()
                .map(|(i, k)| (k.as_str(), i))
                .collect()
        })
        .get(key)
        .copied()
}

pub(crate) fn idx(key: &str) -> usize {
    key_index(key).unwrap_or_else(|| panic!("`{key}` is not a schema key"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Load,
    Store,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Load => "load",
            Direction::Store => "store",
        }
    }
}

/// Access-size category, from the element size of the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeCategory {
    S32,
    S64,
    S128,
}

impl SizeCategory {
    pub fn of(dtype: Dtype) -> SizeCategory {
        match dtype.size_bytes() {
            8 => SizeCategory::S64,
            16 => SizeCategory::S128,
            _ => SizeCategory::S32,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeCategory::S32 => "s32",
            SizeCategory::S64 => "s64",
            SizeCategory::S128 => "s128",
        }
    }
}

/// Amortized stride fraction `q/denom`; `denom == None` is the `>4` bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrideClass {
    Uniform,
    Fraction { q: u8, denom: Option<u8> },
}

impl fmt::Display for StrideClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrideClass::Uniform => f.write_str("uniform"),
            StrideClass::Fraction { q, denom: Some(d) } => write!(f, "{q}/{d}"),
            StrideClass::Fraction { q, denom: None } => write!(f, "{q}/>4"),
        }
    }
}

/// Class of a stride-`s` access to an array whose footprint has `size`
/// cells and `fill` cells once the fast-axis gaps are filled in:
/// `q = clamp(ceil(u·s), 1, min(4, s))` with `u = size / fill`.
pub fn quantize(stride: u64, size: u64, fill: u64) -> StrideClass {
    match stride {
        0 => StrideClass::Uniform,
        1 => StrideClass::Fraction {
            q: 1,
            denom: Some(1),
        },
        s => {
            let num = s as u128 * size as u128;
            let q = if fill == 0 {
                1
            } else {
                num.div_ceil(fill as u128)
            };
            let q = q.clamp(1, s.min(4) as u128) as u8;
            let denom = (s <= 4).then_some(s as u8);
            StrideClass::Fraction { q, denom }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AccessClass {
    pub direction: Direction,
    pub size: SizeCategory,
    pub stride: StrideClass,
}

impl AccessClass {
    pub fn key(&self) -> String {
        format!(
            "mem.global.{}.{}.{}",
            self.direction.as_str(),
            self.size.as_str(),
            self.stride
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_shape() {
        let s = schema();
        assert_eq!(s.len(), 2 * 3 * 15 + 3 * 15 + 1 + 10 + 3);
        assert_eq!(s.len(), 149);
        let mut sorted = s.to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), s.len());
        assert_eq!(key_index("launch.const"), Some(148));
        assert_eq!(key_index("mem.global.load.s32.1/1"), Some(1));
    }

    #[test]
    fn quantization() {
        assert_eq!(quantize(0, 5, 9).to_string(), "uniform");
        assert_eq!(quantize(1, 5, 9).to_string(), "1/1");
        // exactly half at stride 2 stays 1/2
        assert_eq!(quantize(2, 512, 1024).to_string(), "1/2");
        assert_eq!(quantize(2, 513, 1024).to_string(), "2/2");
        assert_eq!(quantize(2, 1024, 2047).to_string(), "2/2");
        assert_eq!(quantize(3, 10, 28).to_string(), "2/3");
        assert_eq!(quantize(3, 10, 10).to_string(), "3/3");
        assert_eq!(quantize(3, 1, 30).to_string(), "1/3");
        assert_eq!(quantize(4, 1, 4).to_string(), "1/4");
        assert_eq!(quantize(9, 1, 1).to_string(), "4/>4");
        assert_eq!(quantize(9, 1, 9).to_string(), "1/>4");
        assert_eq!(quantize(9, 2, 9).to_string(), "2/>4");
    }
}
