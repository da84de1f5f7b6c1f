mod common;

use std::collections::BTreeSet;

use chartcons::eval::parseval;
use chartcons::{
    binarize_with, constraints_from_file, constraints_to_file, debinarize, from_probs,
    gold_constraints, parse, pcfg_allowable_with, read_ptb, write_ptb, AllowAll, Both, Factoring,
    PcfgConstraintFilter, PcfgItem, Tree,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PHRASES: [&str; 4] = ["S", "NP", "VP", "PP"];
const TAGS: [&str; 4] = ["DT", "NN", "VB", "IN"];

fn random_tree<R: Rng>(rng: &mut R, depth: usize, next_word: &mut usize) -> Tree {
    if depth == 0 || rng.random_bool(0.3) {
        let w = format!("w{next_word}");
        *next_word += 1;
        return Tree::node(TAGS[rng.random_range(0..TAGS.len())], vec![Tree::leaf(w)]);
    }
    let arity = rng.random_range(1..=4);
    let kids = (0..arity)
        .map(|_| random_tree(rng, depth - 1, next_word))
        .collect();
    Tree::node(PHRASES[rng.random_range(0..PHRASES.len())], kids)
}

fn tree_from_seed(seed: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = 0;
    Tree::node(
        "S",
        (0..rng.random_range(1..=3))
            .map(|_| random_tree(&mut rng, 4, &mut w))
            .collect(),
    )
}

proptest! {
    #[test]
    fn binarization_round_trips(seed in any::<u64>(), h in 0usize..4, left in any::<bool>()) {
        let t = tree_from_seed(seed);
        let f = if left { Factoring::Left } else { Factoring::Right };
        let b = binarize_with(&t, h, f);
        prop_assert_eq!(debinarize(&b), t.clone());
        prop_assert_eq!(b.leaves(), t.leaves());
    }

    #[test]
    fn treebank_text_round_trips(seed in any::<u64>()) {
        let t = tree_from_seed(seed);
        let text = write_ptb(std::slice::from_ref(&t));
        prop_assert_eq!(read_ptb(&text).unwrap(), vec![t]);
    }

    #[test]
    fn gold_constraints_allow_every_gold_item(seed in any::<u64>(), h in 0usize..4, left in any::<bool>()) {
        let t = tree_from_seed(seed);
        let c = gold_constraints(&t);
        let f = if left { Factoring::Left } else { Factoring::Right };
        for (_, i, k, is_new) in binarize_with(&t, h, f).spans() {
            prop_assert!(pcfg_allowable_with(&PcfgItem { label: 0, is_new, i, k }, &c, f), "[{i},{k}] new={is_new}");
        }
    }

    #[test]
    fn constraints_file_round_trips(seeds in proptest::collection::vec(any::<u64>(), 1..6)) {
        let entries: Vec<_> = seeds.iter().enumerate().map(|(id, &s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = rng.random_range(0..12);
            (id * 3, common::random_constraints(&mut rng, n))
        }).collect();
        let text = constraints_to_file(&entries);
        let back = constraints_from_file(&text).unwrap();
        prop_assert_eq!(&back, &entries);
        prop_assert_eq!(constraints_to_file(&back), text);
    }

    #[test]
    fn banned_sets_shrink_as_theta_grows(
        probs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..15),
        a in 0.5f64..0.999, b in 0.5f64..0.999,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (pb, pe): (Vec<f64>, Vec<f64>) = probs.into_iter().unzip();
        let low = from_probs(&pb, &pe, lo).unwrap();
        let high = from_probs(&pb, &pe, hi).unwrap();
        prop_assert!(high.begin_set().is_subset(&low.begin_set()));
        prop_assert!(high.end_set().is_subset(&low.end_set()));
    }

    #[test]
    fn parseval_self_score_is_perfect(seed in any::<u64>()) {
        let t = tree_from_seed(seed);
        let c = parseval(&t, &t).unwrap();
        prop_assert_eq!(c.matched, c.gold);
        prop_assert_eq!(c.matched, c.pred);
        let s = c.score();
        prop_assert!((s.f - 100.0).abs() < 1e-9);
    }

    #[test]
    fn constraints_compose_by_intersection(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_pcfg(&mut rng);
        let n = rng.random_range(2..=8);
        let s = common::random_sentence(&mut rng, n);
        let c1 = common::random_constraints(&mut rng, n);
        let c2 = common::random_constraints(&mut rng, n);
        let items = |chart: chartcons::Chart| chart.items().collect::<BTreeSet<_>>();
        let full = items(parse(&g, &s, &AllowAll));
        let one = items(parse(&g, &s, &PcfgConstraintFilter::new(&c1)));
        let both = items(parse(&g, &s, &Both(PcfgConstraintFilter::new(&c1), PcfgConstraintFilter::new(&c2))));
        let union = items(parse(&g, &s, &PcfgConstraintFilter::new(&c1.union(&c2))));
        prop_assert!(one.is_subset(&full));
        prop_assert!(both.is_subset(&one));
        prop_assert_eq!(both, union);
    }
}
