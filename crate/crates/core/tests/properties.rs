//! Property tests: grammar totality on arbitrary input, round-tripping on
//! generated subset programs, tokenizer position monotonicity, and the
//! BPE/view invariants.

use mvcode_core::corpus::tokenize_nl;
use mvcode_core::frontend::{parse_source, tokenize, unparse};
use mvcode_core::interp::evaluate;
use mvcode_core::transform::{
    apply_heuristics, exchange_loops, insert_dead_code, rename_identifiers,
};
use mvcode_core::typing::{encode_with_types, infer_types, train_bpe};
use mvcode_core::views::{build_cfg, linearize_ast, linearize_cfg, reverse_post_order, BLOCK_SENTINEL};
use proptest::prelude::*;

// ---- generators for subset programs ----

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,4}".prop_filter("not a keyword", |s| {
        !matches!(
            s.as_str(),
            "def" | "return" | "if" | "elif" | "else" | "while" | "for" | "in" | "break"
                | "continue" | "pass" | "and" | "or" | "not"
        )
    })
}

fn expr(depth: u32) -> BoxedStrategy<String> {
    let leaf = prop_oneof![
        ident(),
        (0i64..1000).prop_map(|n| n.to_string()),
        (0u32..100, 1u32..10).prop_map(|(a, b)| format!("{a}.{b}")),
        "[a-z]{0,6}".prop_map(|s| format!("'{s}'")),
        Just("True".to_string()),
        Just("None".to_string()),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    let inner = expr(depth - 1);
    prop_oneof![
        4 => leaf,
        2 => (expr(depth - 1), prop_oneof![Just("+"), Just("-"), Just("*")], inner.clone())
            .prop_map(|(a, op, b)| format!("{a} {op} {b}")),
        1 => (expr(depth - 1), prop_oneof![Just("<"), Just("=="), Just(">=")], inner.clone())
            .prop_map(|(a, op, b)| format!("({a}) {op} ({b})")),
        1 => inner.clone().prop_map(|e| format!("-({e})")),
        1 => (ident(), inner.clone()).prop_map(|(f, a)| format!("{f}({a})")),
        1 => proptest::collection::vec(inner.clone(), 0..3)
            .prop_map(|xs| format!("[{}]", xs.join(", "))),
        1 => (inner.clone(), expr(depth - 1)).prop_map(|(o, i)| format!("({o})[{i}]")),
    ]
    .boxed()
}

fn stmt(depth: u32) -> BoxedStrategy<Vec<String>> {
    let simple = prop_oneof![
        (ident(), expr(2)).prop_map(|(t, e)| vec![format!("{t} = {e}")]),
        (ident(), expr(2)).prop_map(|(t, e)| vec![format!("{t} += {e}")]),
        (ident(), expr(2)).prop_map(|(t, e)| vec![format!("{t}: int = {e}")]),
        expr(2).prop_map(|e| vec![e]),
        expr(2).prop_map(|e| vec![format!("return {e}")]),
        Just(vec!["pass".to_string()]),
    ];
    if depth == 0 {
        return simple.boxed();
    }
    let body = proptest::collection::vec(stmt(depth - 1), 1..3).prop_map(|stmts| {
        stmts.into_iter().flatten().map(|line| format!("    {line}")).collect::<Vec<String>>()
    });
    prop_oneof![
        5 => simple,
        1 => (expr(1), body.clone()).prop_map(|(cond, body)| {
            let mut lines = vec![format!("if {cond}:")];
            lines.extend(body);
            lines
        }),
        1 => (expr(1), body.clone(), body.clone()).prop_map(|(cond, then_b, else_b)| {
            let mut lines = vec![format!("if {cond}:")];
            lines.extend(then_b);
            lines.push("else:".to_string());
            lines.extend(else_b);
            lines
        }),
        1 => (expr(1), body.clone()).prop_map(|(cond, body)| {
            let mut lines = vec![format!("while {cond}:")];
            lines.extend(body);
            lines
        }),
        1 => (ident(), expr(1), body.clone()).prop_map(|(var, iter, body)| {
            let mut lines = vec![format!("for {var} in {iter}:")];
            lines.extend(body);
            lines
        }),
        // range loops and affine while loops: the shapes loop exchange
        // rewrites, with generated bodies stressing its safety guards
        2 => (ident(), 0i64..4, 1i64..7, body.clone()).prop_map(|(var, a, b, body)| {
            let mut lines = vec![format!("for {var} in range({a}, {b}):")];
            lines.extend(body);
            lines
        }),
        2 => (ident(), 0i64..3, 3i64..8, body.clone()).prop_map(|(var, start, stop, body)| {
            let mut lines = vec![format!("{var} = {start}"), format!("while {var} < {stop}:")];
            lines.extend(body);
            lines.push(format!("    {var} = {var} + 1"));
            lines
        }),
        1 => (ident(), proptest::collection::vec(ident(), 0..3), body).prop_map(
            |(name, params, body)| {
                let mut lines = vec![format!("def {name}({}):", params.join(", "))];
                lines.extend(body);
                lines
            }
        ),
    ]
    .boxed()
}

fn program() -> impl Strategy<Value = String> {
    proptest::collection::vec(stmt(2), 1..5)
        .prop_map(|stmts| {
            let mut out = String::new();
            for lines in stmts {
                for line in lines {
                    out.push_str(&line);
                    out.push('\n');
                }
            }
            out
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    // grammar totality: any input either parses or reports a position,
    // and the frontend never panics
    #[test]
    fn no_panics_on_arbitrary_input(input in any::<String>()) {
        match tokenize(&input) {
            Ok(tokens) => {
                let _ = mvcode_core::parse(&tokens);
            }
            Err(failure) => {
                prop_assert!(failure.line >= 1);
                prop_assert!(failure.col >= 1);
            }
        }
    }

    #[test]
    fn roundtrip_on_generated_programs(src in program()) {
        prop_assume!(parse_source(&src).is_ok());
        let t1 = parse_source(&src).unwrap();
        let canonical = unparse(&t1);
        let t2 = parse_source(&canonical).unwrap_or_else(|e| {
            panic!("canonical text failed to parse: {e}\n{canonical}")
        });
        prop_assert!(t1.structural_eq(&t2), "round trip broke:\n{}\n->\n{}", src, canonical);
        // unparse is a fixed point on canonical text
        prop_assert_eq!(unparse(&t2), canonical);
    }

    #[test]
    fn tokenizer_positions_strictly_increase_and_locate(src in program()) {
        prop_assume!(tokenize(&src).is_ok());
        let tokens = tokenize(&src).unwrap();
        let lines: Vec<&str> = src.split('\n').collect();
        let mut prev = (0usize, 0usize);
        for t in tokens.iter().filter(|t| !t.is_synthetic()) {
            let cur = (t.line, t.col);
            prop_assert!(cur > prev, "positions regressed: {:?} then {:?}", prev, cur);
            prev = cur;
            // (line, col) locates the token text exactly in the source
            let line = lines[t.line - 1];
            let from_col: String = line.chars().skip(t.col - 1).collect();
            prop_assert!(
                from_col.starts_with(t.text.lines().next().unwrap_or("")),
                "token {:?} not found at {}:{} in {:?}",
                t.text,
                t.line,
                t.col,
                line
            );
        }
        // indents and dedents balance
        let open = tokens.iter().filter(|t| t.kind == mvcode_core::TokenKind::Indent).count();
        let close = tokens.iter().filter(|t| t.kind == mvcode_core::TokenKind::Dedent).count();
        prop_assert_eq!(open, close);
    }

    #[test]
    fn ast_sequence_length_is_node_count(src in program()) {
        prop_assume!(parse_source(&src).is_ok());
        let tree = parse_source(&src).unwrap();
        prop_assert_eq!(linearize_ast(&tree).tokens.len(), tree.len());
    }

    #[test]
    fn cfg_invariants_on_generated_programs(src in program()) {
        prop_assume!(parse_source(&src).is_ok());
        let tree = parse_source(&src).unwrap();
        prop_assume!(build_cfg(&tree).is_ok());
        let cfg = build_cfg(&tree).unwrap();
        // reachability and degree invariants
        prop_assert!(cfg.edges.iter().all(|e| e.dst != cfg.entry()));
        prop_assert!(cfg.edges.iter().all(|e| e.src != cfg.exit()));
        prop_assert_eq!(reverse_post_order(&cfg).len(), cfg.blocks.len());
        // token conservation against the canonical PL view
        let mut pl = mvcode_core::typing::typed_pl_tokens(&tree).tokens;
        pl.sort();
        let seq = linearize_cfg(&tree, &cfg);
        for token in seq.tokens.iter().filter(|t| *t != BLOCK_SENTINEL) {
            prop_assert!(pl.binary_search(token).is_ok(), "token {} not in PL", token);
        }
    }

    #[test]
    fn transforms_preserve_parseability(src in program(), seed in 0u64..1000) {
        prop_assume!(parse_source(&src).is_ok());
        let tree = parse_source(&src).unwrap();
        let (renamed, _) = rename_identifiers(&tree, seed);
        prop_assert!(parse_source(&unparse(&renamed)).is_ok());
        let (exchanged, _) = exchange_loops(&tree);
        prop_assert!(parse_source(&unparse(&exchanged)).is_ok());
        let (with_dead, _) = insert_dead_code(&tree, seed);
        prop_assert!(parse_source(&unparse(&with_dead)).is_ok());
    }

    // differential fuzz: every heuristic composition must leave observable
    // module-level behavior untouched (status, return value, output). When
    // a program fails on an unbound name, renaming legitimately rewrites
    // the identifier inside the error message, so the variant's message is
    // mapped back through the rename bijection before comparing.
    #[test]
    fn transforms_preserve_module_behavior(src in program(), seed in 0u64..500) {
        prop_assume!(parse_source(&src).is_ok());
        let tree = parse_source(&src).unwrap();
        let baseline = evaluate(&tree, None, &[], 20_000);
        // step-limited baselines are skipped: the variant legitimately
        // spends more steps per iteration, so partial output may differ
        prop_assume!(baseline.status != mvcode_core::Status::StepLimit);
        let (_, (rename_map, _)) = mvcode_core::transform::rename_with_map(&tree, seed);
        for mask in 1u8..8 {
            let (variant, _) = apply_heuristics(&tree, mask, seed);
            let mut got = evaluate(&variant, None, &[], 80_000);
            if mask & 1 != 0 {
                if let mvcode_core::Status::RuntimeError(message) = &got.status {
                    let mut normalized = message.clone();
                    // longest fresh names first: VAR_1 must not eat VAR_10
                    let mut entries: Vec<(&String, &String)> = rename_map.map.iter().collect();
                    entries.sort_by_key(|(_, fresh)| std::cmp::Reverse(fresh.len()));
                    for (original, fresh) in entries {
                        normalized = normalized.replace(fresh.as_str(), original);
                    }
                    got.status = mvcode_core::Status::RuntimeError(normalized);
                }
            }
            prop_assert!(
                baseline.semantic_eq(&got),
                "mask {} diverged on:\n{}\nvariant:\n{}\n{:?} vs {:?}",
                mask,
                src,
                unparse(&variant),
                baseline.status,
                got.status
            );
        }
    }

    #[test]
    fn batches_reproducible_from_seed(n in 2usize..5, seed in 0u64..100) {
        use mvcode_core::pairs::{make_batches, make_positive_pairs, SampleViews, ViewRecord};
        use mvcode_core::{TypeLabel, ViewKind};
        let bpe = train_bpe(&[vec!["alpha", "beta", "gamma", "delta"]], 20);
        let record = |id: &str, view, word: &str| {
            let subtokens = bpe.encode_token(word);
            let sublabels = vec![TypeLabel::Unknown; subtokens.len()];
            ViewRecord { sample_id: id.into(), view, subtokens, sublabels, seed: None }
        };
        let mut pool = Vec::new();
        for i in 0..12 {
            let id = format!("s{i}");
            let views = SampleViews {
                pl: record(&id, ViewKind::Pl, "alpha"),
                ast: record(&id, ViewKind::Ast, "beta"),
                cfg: record(&id, ViewKind::Cfg, "gamma"),
                pt: record(&id, ViewKind::Pt, "delta"),
                nl: Some(record(&id, ViewKind::Nl, "alpha")),
            };
            pool.extend(make_positive_pairs(&views, &bpe).unwrap());
        }
        let a = make_batches(pool.clone(), n, seed).unwrap();
        let b = make_batches(pool, n, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bpe_roundtrips_every_training_token(
        tokens in proptest::collection::vec("[ -~]{1,12}", 1..20),
        merges in 0usize..60,
    ) {
        let corpus = vec![tokens.clone()];
        let model = train_bpe(&corpus, merges);
        for token in tokens.iter().filter(|t| !t.is_empty()) {
            if mvcode_core::typing::SPECIAL_TOKENS.contains(&token.as_str()) {
                continue;
            }
            let subs = model.encode_token(token);
            prop_assert_eq!(&model.detokenize(&subs), token);
        }
    }

    #[test]
    fn subtoken_labels_inherit_counts(src in program()) {
        prop_assume!(parse_source(&src).is_ok());
        let tree = parse_source(&src).unwrap();
        let typed = infer_types(&tree);
        let model = train_bpe(std::slice::from_ref(&typed.tokens), 30);
        let (subs, sublabels) = encode_with_types(&typed, &model);
        prop_assert_eq!(subs.len(), sublabels.len());
        let expected: usize = typed
            .tokens
            .iter()
            .zip(&typed.labels)
            .filter(|(_, l)| **l != mvcode_core::TypeLabel::O)
            .map(|(t, _)| model.encode_token(t).len())
            .sum();
        let got = sublabels.iter().filter(|l| **l != mvcode_core::TypeLabel::O).count();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn nl_tokenizer_is_lowercase_stable(text in any::<String>()) {
        for token in tokenize_nl(&text) {
            prop_assert!(!token.is_empty());
            prop_assert!(token.chars().all(|c| c.is_alphanumeric() || c == '_'));
            // lowercasing again changes nothing (some chars are caseless)
            let relowered: String = token.chars().flat_map(char::to_lowercase).collect();
            prop_assert_eq!(&relowered, &token);
        }
    }
}
