use std::fmt;

/// Set of global kernel ids (conv offset + index within the conv).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct KernelSet {
    words: Vec<u64>,
}

impl KernelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: usize) {
        let (w, b) = (id / 64, id % 64);
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << b;
    }

    pub fn contains(&self, id: usize) -> bool {
        self.words
            .get(id / 64)
            .is_some_and(|w| w & (1 << (id % 64)) != 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn intersection_len(&self, other: &KernelSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_len(&self, other: &KernelSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| wi * 64 + b)
        })
    }
}

impl FromIterator<usize> for KernelSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = KernelSet::new();
        for id in iter {
            s.insert(id);
        }
        s
    }
}

impl fmt::Debug for KernelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
