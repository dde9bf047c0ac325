use std::collections::HashMap;

use super::{match_key, Mention, MentionKind, Stemmer};

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// Comparison keys of one mention: its synonyms, plus its surface when it is
/// technical. Lay surfaces never take part in matching.
pub(crate) fn mention_keys(m: &Mention, stemmer: Option<&dyn Stemmer>) -> Vec<String> {
    let mut keys: Vec<String> = m
        .synonyms
        .iter()
        .map(|s| match_key(s, stemmer))
        .filter(|k| !k.is_empty())
        .collect();
    if m.kind == MentionKind::Technical {
        let k = match_key(&m.surface, stemmer);
        if !k.is_empty() {
            keys.push(k);
        }
    }
    keys.sort();
    keys.dedup();
    keys
}

/// Groups mentions that refer to the same thing.
///
/// Two mentions are duplicates when their comparison keys intersect (see
/// [`mention_keys`]); groups are the transitive closure of that relation.
/// Groups are returned as mention indices, ordered by first member.
pub fn unique_mentions(mentions: &[Mention], stemmer: Option<&dyn Stemmer>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..mentions.len()).collect();
    let mut owner: HashMap<String, usize> = HashMap::new();
    for (i, m) in mentions.iter().enumerate() {
        for key in mention_keys(m, stemmer) {
            match owner.get(&key) {
                Some(&j) => union(&mut parent, i, j),
                None => {
                    owner.insert(key, i);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..mentions.len() {
        let root = find(&mut parent, i);
        let g = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}
