//! Exhaustive and random rule-tree generators over small predicate universes.
//!
//! Trees are acyclic by construction: predicates are numbered and a rule for
//! `p{i}` only mentions predicates with a larger number.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::oracle::OracleRule;

pub const FAMILY_PREDICATES: usize = 5;

pub fn name(i: usize) -> String {
    format!("p{i}")
}

/// Every rule for `p{head}` over `p{head+1}..p{n-1}`, optionally bounded in
/// body size.
pub fn rules_for_head(head: usize, n: usize, max_body: usize) -> Vec<OracleRule> {
    let rest: Vec<usize> = (head + 1..n).collect();
    let mut out = Vec::new();
    // Each later predicate is a condition (1), an exception (2) or unused (0).
    let combos = 3usize.pow(rest.len() as u32);
    for code in 0..combos {
        let (mut conds, mut excs) = (Vec::new(), Vec::new());
        let mut c = code;
        for &p in &rest {
            match c % 3 {
                1 => conds.push(name(p)),
                2 => excs.push(name(p)),
                _ => {}
            }
            c /= 3;
        }
        if conds.is_empty() || conds.len() + excs.len() > max_body {
            continue;
        }
        for all in [true, false] {
            out.push(OracleRule { head: name(head), all, conditions: conds.clone(), exceptions: excs.clone() });
        }
    }
    out
}

pub fn all_rules(n: usize, max_body: usize) -> Vec<OracleRule> {
    (0..n).flat_map(|h| rules_for_head(h, n, max_body)).collect()
}

/// Bodies of at most this size are used for three-rule trees.
pub const THREE_RULE_MAX_BODY: usize = 2;

/// The enumerated family over five predicates:
/// - every one-rule tree;
/// - every two-rule tree (ordered, distinct rules);
/// - every three-rule tree whose rules have at most two body predicates,
///   whose first rule concludes `p0`, and whose two supporting rules are
///   distinct, unordered and conclude predicates the tree mentions in a body.
pub fn enumerate_family() -> Vec<Vec<OracleRule>> {
    let n = FAMILY_PREDICATES;
    let full = all_rules(n, usize::MAX);
    let mut family: Vec<Vec<OracleRule>> = full.iter().map(|r| vec![r.clone()]).collect();
    for a in &full {
        for b in &full {
            if a != b {
                family.push(vec![a.clone(), b.clone()]);
            }
        }
    }
    let small = all_rules(n, THREE_RULE_MAX_BODY);
    let mentions = |rules: &[&OracleRule], p: &str| {
        rules.iter().any(|r| r.conditions.iter().chain(&r.exceptions).any(|x| x == p))
    };
    for a in small.iter().filter(|r| r.head == "p0") {
        for (i, b) in small.iter().enumerate() {
            for c in &small[i + 1..] {
                if a == b || a == c {
                    continue;
                }
                let rules = [a, b, c];
                if mentions(&rules, &b.head) && mentions(&rules, &c.head) {
                    family.push(vec![a.clone(), b.clone(), c.clone()]);
                }
            }
        }
    }
    family
}

/// A random acyclic tree over `n` predicates with `1..=max_rules` rules. The
/// first rule concludes `p0`.
pub fn random_tree(rng: &mut impl Rng, n: usize, max_rules: usize) -> Vec<OracleRule> {
    assert!(n >= 2);
    let count = rng.gen_range(1..=max_rules);
    let mut rules = Vec::with_capacity(count);
    while rules.len() < count {
        let head = if rules.is_empty() { 0 } else { rng.gen_range(0..n - 1) };
        let rest: Vec<usize> = (head + 1..n).collect();
        let mut picks = rest.clone();
        picks.shuffle(rng);
        let body = rng.gen_range(1..=picks.len().min(4));
        let n_exc = rng.gen_range(0..=body.saturating_sub(1).min(2));
        let n_cond = body - n_exc;
        if n_cond == 0 {
            continue;
        }
        let mut conds: Vec<usize> = picks[..n_cond].to_vec();
        let mut excs: Vec<usize> = picks[n_cond..body].to_vec();
        conds.sort_unstable();
        excs.sort_unstable();
        let rule = OracleRule {
            head: name(head),
            all: rng.gen_bool(0.5),
            conditions: conds.into_iter().map(name).collect(),
            exceptions: excs.into_iter().map(name).collect(),
        };
        if !rules.contains(&rule) {
            rules.push(rule);
        }
    }
    rules
}

/// Every subset of `names`.
pub fn subsets(names: &[String]) -> impl Iterator<Item = Vec<String>> + '_ {
    (0u32..1 << names.len()).map(move |mask| {
        names
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, n)| n.clone())
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rule_counts() {
        // 3^k - 2^k body assignments, two operators each.
        assert_eq!(rules_for_head(0, 5, usize::MAX).len(), 2 * (81 - 16));
        assert_eq!(all_rules(5, usize::MAX).len(), 180);
        assert_eq!(all_rules(5, 2).len(), 80);
    }

    #[test]
    fn random_trees_are_acyclic_and_distinct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let t = random_tree(&mut rng, 8, 6);
            assert_eq!(t[0].head, "p0");
            for r in &t {
                let h: usize = r.head[1..].parse().unwrap();
                assert!(r.conditions.iter().chain(&r.exceptions).all(|x| x[1..].parse::<usize>().unwrap() > h));
            }
        }
    }
}
