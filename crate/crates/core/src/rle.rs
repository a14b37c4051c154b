//! Row-major run-length codec for [`BinaryMask`].
//!
//! Runs alternate background/foreground and always start with a background
//! run, which is the only run allowed to be zero. The text form is two lines:
//! `h w` followed by the space-separated decimal counts.

use serde::{Deserialize, Serialize};

use crate::mask::{BinaryMask, MaskError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleMask {
    pub height: u32,
    pub width: u32,
    pub counts: Vec<u32>,
}

impl RleMask {
    /// Checks the canonical-form invariants without decoding.
    pub fn validate(&self) -> Result<(), MaskError> {
        if self.height == 0 || self.width == 0 {
            return Err(MaskError::ZeroDimension {
                height: self.height,
                width: self.width,
            });
        }
        if self.counts.is_empty() {
            return Err(MaskError::MalformedRle("no counts".into()));
        }
        if let Some(pos) = self.counts.iter().skip(1).position(|&c| c == 0) {
            return Err(MaskError::MalformedRle(format!(
                "zero run at index {}",
                pos + 1
            )));
        }
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        let expected = self.height as u64 * self.width as u64;
        if total != expected {
            return Err(MaskError::MalformedRle(format!(
                "counts sum to {total}, expected {expected}"
            )));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let counts: Vec<String> = self.counts.iter().map(u32::to_string).collect();
        format!("{} {}\n{}\n", self.height, self.width, counts.join(" "))
    }

    pub fn parse_text(text: &str) -> Result<Self, MaskError> {
        let bad = |msg: &str| MaskError::MalformedRle(msg.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("missing header line"))?;
        let mut dims = header.split_whitespace().map(str::parse::<u32>);
        let (height, width) = match (dims.next(), dims.next(), dims.next()) {
            (Some(Ok(h)), Some(Ok(w)), None) => (h, w),
            _ => return Err(bad("header must be `h w`")),
        };
        let counts = lines
            .next()
            .ok_or_else(|| bad("missing counts line"))?
            .split_whitespace()
            .map(|tok| tok.parse::<u32>().map_err(|_| bad("non-numeric count")))
            .collect::<Result<Vec<_>, _>>()?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing content"));
        }
        let rle = Self {
            height,
            width,
            counts,
        };
        rle.validate()?;
        Ok(rle)
    }
}

pub fn encode(mask: &BinaryMask) -> RleMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &bit in mask.bits() {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    counts.push(run);
    RleMask {
        height: mask.height(),
        width: mask.width(),
        counts,
    }
}

pub fn decode(rle: &RleMask) -> Result<BinaryMask, MaskError> {
    rle.validate()?;
    let mut bits = Vec::with_capacity(rle.height as usize * rle.width as usize);
    let mut value = false;
    for &run in &rle.counts {
        bits.extend(std::iter::repeat_n(value, run as usize));
        value = !value;
    }
    BinaryMask::new(rle.height, rle.width, bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(h: u32, w: u32, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(h, w, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    /// Independent scanner: counts runs by comparing each pixel with its predecessor.
    fn naive_counts(bits: &[bool]) -> Vec<u32> {
        let mut counts = vec![0u32];
        let mut prev = false;
        for &b in bits {
            if b == prev {
                *counts.last_mut().unwrap() += 1;
            } else {
                counts.push(1);
                prev = b;
            }
        }
        counts
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode(&mask(2, 2, &[0, 0, 0, 0])).counts, vec![4]);
        assert_eq!(encode(&mask(2, 2, &[1, 1, 1, 1])).counts, vec![0, 4]);
        let m = mask(2, 3, &[0, 1, 1, 0, 0, 1]);
        assert_eq!(naive_counts(m.bits()), vec![1, 2, 2, 1]);
        assert_eq!(encode(&m).counts, vec![1, 2, 2, 1]);
    }

    #[test]
    fn decode_examples() {
        let rle = |h, w, counts: &[u32]| RleMask {
            height: h,
            width: w,
            counts: counts.to_vec(),
        };
        assert!(decode(&rle(2, 2, &[4])).unwrap().is_all_background());
        assert_eq!(decode(&rle(2, 2, &[0, 4])).unwrap().area(), 4);
        assert_eq!(
            decode(&rle(2, 3, &[1, 2, 2, 1])).unwrap(),
            mask(2, 3, &[0, 1, 1, 0, 0, 1])
        );
    }

    #[test]
    fn decode_rejects_malformed() {
        let bad_sum = RleMask {
            height: 2,
            width: 2,
            counts: vec![1, 2],
        };
        assert!(matches!(decode(&bad_sum), Err(MaskError::MalformedRle(_))));
        let interior_zero = RleMask {
            height: 2,
            width: 2,
            counts: vec![2, 0, 2],
        };
        assert!(matches!(
            decode(&interior_zero),
            Err(MaskError::MalformedRle(_))
        ));
    }

    #[test]
    fn text_format() {
        let rle = encode(&mask(2, 3, &[0, 1, 1, 0, 0, 1]));
        assert_eq!(rle.to_text(), "2 3\n1 2 2 1\n");
        assert_eq!(RleMask::parse_text("2 3\n1 2 2 1\n").unwrap(), rle);
        assert!(RleMask::parse_text("2 3\n1 2 2\n").is_err());
        assert!(RleMask::parse_text("2\n4\n").is_err());
        assert!(RleMask::parse_text("2 2\n4\n9\n").is_err());
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..=64, 1u32..=64, 0.0f64..=1.0).prop_flat_map(|(h, w, density)| {
            proptest::collection::vec(proptest::bool::weighted(density), (h * w) as usize)
                .prop_map(move |bits| BinaryMask::new(h, w, bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_and_canonical(m in arb_mask()) {
            let rle = encode(&m);
            prop_assert!(rle.counts.iter().skip(1).all(|&c| c > 0));
            prop_assert_eq!(&rle.counts, &naive_counts(m.bits()));
            prop_assert_eq!(rle.to_text(), encode(&m).to_text());
            prop_assert_eq!(decode(&rle).unwrap(), m);
        }
    }
}
