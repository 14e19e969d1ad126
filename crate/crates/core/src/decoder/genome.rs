use std::fmt;

use crate::analysis::grouping::GroupingMap;
use crate::decoder::kernel_set::KernelSet;
use crate::error::{Error, Result};

/// One bit per kernel group (1 = keep), laid out by the grouping's segments.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    pub bits: Vec<bool>,
    pub class_id: usize,
}

impl Genome {
    pub fn new(bits: Vec<bool>, class_id: usize) -> Self {
        Self { bits, class_id }
    }

    pub fn ones(len: usize, class_id: usize) -> Self {
        Self::new(vec![true; len], class_id)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn parse_bits(text: &str, class_id: usize) -> Result<Self> {
        let bits = text
            .trim()
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::Genome(format!("invalid bit {other:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(bits, class_id))
    }

    pub fn check_len(&self, grouping: &GroupingMap) -> Result<()> {
        if self.len() != grouping.total_bits() {
            return Err(Error::Genome(format!(
                "genome has {} bits, grouping expects {}",
                self.len(),
                grouping.total_bits()
            )));
        }
        if self.class_id >= grouping.num_classes() {
            return Err(Error::Genome(format!(
                "class {} outside grouping's {} classes",
                self.class_id,
                grouping.num_classes()
            )));
        }
        Ok(())
    }

    /// Conv ordinal of the first segment whose bits are all zero.
    pub fn first_empty_segment(&self, grouping: &GroupingMap) -> Option<usize> {
        grouping
            .segments
            .iter()
            .find(|s| !self.bits[s.offset..s.offset + s.groups].iter().any(|&b| b))
            .map(|s| s.convs[0])
    }
}

impl fmt::Debug for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Genome(class {}, {})", self.class_id, self.to_bit_string())
    }
}

/// Re-enables group 0 (the most important) of every all-zero segment.
pub fn repair(genome: &Genome, grouping: &GroupingMap) -> Genome {
    let mut out = genome.clone();
    for s in &grouping.segments {
        if !out.bits[s.offset..s.offset + s.groups].iter().any(|&b| b) {
            out.bits[s.offset] = true;
        }
    }
    out
}

/// Global ids of every kernel in a kept group.
pub fn retained_kernel_set(grouping: &GroupingMap, genome: &Genome) -> Result<KernelSet> {
    genome.check_len(grouping)?;
    let offsets = grouping.conv_offsets();
    let class = &grouping.groups[genome.class_id];
    let mut set = KernelSet::new();
    for s in &grouping.segments {
        for g in 0..s.groups {
            if !genome.bits[s.offset + g] {
                continue;
            }
            for &conv in &s.convs {
                for &k in &class[conv][g] {
                    set.insert(offsets[conv] + k);
                }
            }
        }
    }
    Ok(set)
}
