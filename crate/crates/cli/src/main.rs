mod args;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Deserialize;

use chartcons::constraints::constraints_to_file;
use chartcons::ctf::CoarseMap;
use chartcons::eval::{
    compare_runs, reports_to_tsv, run_corpus, summarize, to_tsv, SentenceResult, Status,
    PARSEVAL_CONVENTIONS,
};
use chartcons::pipeline::{
    read_sentences, score_corpus, CtfSetup, PcfgRun, Sentence, TagRun, TagSource,
};
use chartcons::supertag::{
    assignment_to_line, extract_inventory, supertag_corpus, topk, AnySupertagger, FrequencyModel,
    Inventory, NeuralSupertagger, SupertagAssignment, SupertagTrainConfig,
};
use chartcons::synth::{generate, SynthConfig, HEAD_RULES};
use chartcons::tag::{
    binarize_tag_grammar, extract_spinal, read_tag_grammar, tag_gold_tree, HeadRules, TagParser,
};
use chartcons::tagger::{
    model_kind, tagged_corpus, tagger_prf, BoundaryModel, BoundaryPredictor, LogisticConfig,
    LogisticTagger, TrainConfig,
};
use chartcons::{
    binarize_with, constraints_from_file, debinarize, extract_pcfg, gold_constraints, read_ptb,
    read_ptb_binarized, write_ptb, BeginEndConstraints, CkyParser, Pcfg, TagStrategy, Tree,
};

use args::*;

/// A mistake in how the tool was invoked, as opposed to bad data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    seed: Option<u64>,
    tagger: TrainConfig,
    logistic: LogisticConfig,
    supertag: SupertagTrainConfig,
}

impl Config {
    fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Config> {
        let mut cfg: Config = match path {
            Some(p) => {
                toml::from_str(&read(p)?).with_context(|| format!("config {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Some(s) = seed.or(cfg.seed) {
            cfg.seed = Some(s);
            cfg.tagger.seed = s;
            cfg.logistic.seed = s;
            cfg.supertag.seed = s;
        }
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        _ => {
            print!("{text}");
            Ok(())
        }
    }
}

fn treebank(path: &Path) -> Result<Vec<Tree>> {
    read_ptb(&read(path)?).with_context(|| format!("treebank {}", path.display()))
}

fn sentences(path: &Path) -> Result<Vec<Sentence>> {
    read_sentences(&read(path)?).with_context(|| format!("input {}", path.display()))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.5..1.0).contains(&theta) {
        return usage(format!("--theta must lie in [0.5, 1), got {theta}"));
    }
    Ok(())
}

fn head_rules(path: Option<&Path>) -> Result<HeadRules> {
    let text = match path {
        Some(p) => read(p)?,
        None => HEAD_RULES.to_string(),
    };
    Ok(HeadRules::from_text(&text)?)
}

enum AnyTagger {
    Lstm(BoundaryModel),
    Logistic(LogisticTagger),
}

impl AnyTagger {
    fn load(path: &Path) -> Result<AnyTagger> {
        let text = read(path)?;
        let ctx = || format!("tagger model {}", path.display());
        Ok(match model_kind(&text).with_context(ctx)?.as_str() {
            "boundary-logistic" => {
                AnyTagger::Logistic(LogisticTagger::from_json(&text).with_context(ctx)?)
            }
            _ => AnyTagger::Lstm(BoundaryModel::from_json(&text).with_context(ctx)?),
        })
    }

    fn predictor(&self) -> &dyn BoundaryPredictor {
        match self {
            AnyTagger::Lstm(m) => m,
            AnyTagger::Logistic(m) => m,
        }
    }
}

/// Constraints for each sentence, or `None` for unconstrained parsing.
fn constraints_for(
    input: &[Sentence],
    file: Option<&Path>,
    tagger: Option<&Path>,
    theta: f64,
) -> Result<Option<Vec<BeginEndConstraints>>> {
    if let Some(path) = tagger {
        check_theta(theta)?;
        let t = AnyTagger::load(path)?;
        return Ok(Some(
            input
                .iter()
                .map(|s| t.predictor().constraints(&s.words, &s.pos, theta))
                .collect(),
        ));
    }
    let Some(path) = file else { return Ok(None) };
    let entries = constraints_from_file(&read(path)?)
        .with_context(|| format!("constraints {}", path.display()))?;
    let mut out: Vec<Option<BeginEndConstraints>> = vec![None; input.len()];
    for (id, c) in entries {
        let Some(s) = input.get(id) else {
            bail!(
                "constraints for sentence {id}, but the input has {}",
                input.len()
            )
        };
        if c.len() != s.len() {
            bail!(
                "constraints for sentence {id} have length {}, the sentence has {}",
                c.len(),
                s.len()
            );
        }
        out[id] = Some(c);
    }
    out.into_iter()
        .enumerate()
        .map(|(id, c)| c.with_context(|| format!("no constraints for sentence {id}")))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn coarse_map(spec: Option<&str>) -> Result<Option<CoarseMap>> {
    match spec {
        None => Ok(None),
        Some("default") => Ok(Some(CoarseMap::new())),
        Some(path) => Ok(Some(CoarseMap::from_text(&read(Path::new(path))?)?)),
    }
}

fn predicted_trees(rows: &[SentenceResult]) -> String {
    let mut out = String::new();
    for r in rows {
        match &r.tree {
            Some(t) => writeln!(out, "{t}").unwrap(),
            None => out.push_str("()\n"),
        }
    }
    out
}

fn finish_parse(rows: &[SentenceResult], out: Option<&Path>, stats: Option<&Path>) -> Result<()> {
    write(out, &predicted_trees(rows))?;
    if let Some(p) = stats {
        write(Some(p), &to_tsv(rows))?;
    }
    let r = summarize("parse", rows, None);
    eprintln!(
        "parsed {}/{} sentences, mean chart {:.3} ms, mean items {:.1}",
        r.parsed, r.sentences, r.mean_chart_ms, r.mean_items
    );
    if rows.iter().any(|r| !r.gold_fraction.is_nan()) {
        eprintln!(
            "labeled f {:.2} (parsed only {:.2})",
            r.score.f, r.parsed_score.f
        );
    }
    Ok(())
}

fn load_supertagger(model: &Path, inventory: &Path) -> Result<(AnySupertagger, Inventory)> {
    let m = AnySupertagger::from_json(&read(model)?)
        .with_context(|| format!("supertag model {}", model.display()))?;
    let inv = Inventory::from_text(&read(inventory)?)
        .with_context(|| format!("inventory {}", inventory.display()))?;
    Ok((m, inv))
}

fn assignments(
    m: &AnySupertagger,
    input: &[Sentence],
    k: usize,
) -> Result<Vec<SupertagAssignment>> {
    if k == 0 {
        return usage("--k must be at least 1");
    }
    Ok(input.iter().map(|s| topk(m, &s.words, &s.pos, k)).collect())
}

fn treebank_cmd(cmd: TreebankCmd, cfg: &Config) -> Result<()> {
    match cmd {
        TreebankCmd::Binarize { input, out, bin } => {
            let trees: Vec<Tree> = treebank(&input)?
                .iter()
                .map(|t| binarize_with(t, bin.markov, bin.factoring))
                .collect();
            write(out.as_deref(), &write_ptb(&trees))
        }
        TreebankCmd::Debinarize { input, out } => {
            let trees = read_ptb_binarized(&read(&input)?)
                .with_context(|| format!("treebank {}", input.display()))?;
            write(
                out.as_deref(),
                &write_ptb(&trees.iter().map(debinarize).collect::<Vec<_>>()),
            )
        }
        TreebankCmd::ExtractPcfg {
            treebank: path,
            out,
            bin,
            words,
        } => {
            let trees: Vec<Tree> = treebank(&path)?
                .iter()
                .map(|t| binarize_with(t, bin.markov, bin.factoring))
                .collect();
            write(out.as_deref(), &extract_pcfg(&trees, !words)?.to_text())
        }
        TreebankCmd::ExtractTag {
            treebank: path,
            head_rules: hr,
            binarize,
            out,
            trees_out,
        } => {
            let corpus = extract_spinal(&treebank(&path)?, &head_rules(hr.as_deref())?)?;
            if let Some(p) = &trees_out {
                write(Some(p), &write_ptb(&corpus.trees))?;
            }
            let g = match binarize {
                Some(h) => binarize_tag_grammar(&corpus.grammar, h),
                None => corpus.grammar,
            };
            write(out.as_deref(), &g.to_text())
        }
        TreebankCmd::Synth {
            sentences,
            min_len,
            max_len,
            out,
        } => {
            if min_len > max_len || max_len < 2 {
                return usage("need --min-len <= --max-len and --max-len >= 2");
            }
            let seed = cfg.seed.unwrap_or(SynthConfig::default().seed);
            let trees = generate(&SynthConfig {
                sentences,
                min_len,
                max_len,
                seed,
            });
            write(out.as_deref(), &write_ptb(&trees))
        }
    }
}

fn constraints_cmd(cmd: ConstraintsCmd) -> Result<()> {
    match cmd {
        ConstraintsCmd::Gold {
            treebank: path,
            out,
        } => {
            let entries: Vec<_> = treebank(&path)?
                .iter()
                .map(gold_constraints)
                .enumerate()
                .collect();
            write(out.as_deref(), &constraints_to_file(&entries))
        }
        ConstraintsCmd::Eval { pred, gold, out } => {
            let load = |p: &Path| -> Result<Vec<BeginEndConstraints>> {
                let mut e = constraints_from_file(&read(p)?)
                    .with_context(|| format!("constraints {}", p.display()))?;
                e.sort_by_key(|(id, _)| *id);
                Ok(e.into_iter().map(|(_, c)| c).collect())
            };
            let r = tagger_prf(&load(&pred)?, &load(&gold)?)?;
            let mut text = String::from(
                "set\tprecision\trecall\taccuracy\ttrue_positives\tpredicted\tgold\tpositions\n",
            );
            for (name, p) in [("begin", r.begin), ("end", r.end)] {
                writeln!(
                    text,
                    "{name}\t{:.2}\t{:.2}\t{:.2}\t{}\t{}\t{}\t{}",
                    p.precision,
                    p.recall,
                    p.accuracy,
                    p.true_positives,
                    p.predicted,
                    p.gold,
                    p.positions
                )
                .unwrap();
            }
            write(out.as_deref(), &text)
        }
    }
}

fn tagger_cmd(cmd: TaggerCmd, cfg: &Config) -> Result<()> {
    match cmd {
        TaggerCmd::Train {
            treebank: path,
            dev,
            out,
            kind,
            epochs,
            lr,
            hidden,
        } => {
            let train = tagged_corpus(&treebank(&path)?);
            let dev = match dev {
                Some(d) => tagged_corpus(&treebank(&d)?),
                None => Vec::new(),
            };
            let json = match kind {
                TaggerKind::Lstm => {
                    let mut c = cfg.tagger;
                    c.epochs = epochs.unwrap_or(c.epochs);
                    c.lr0 = lr.unwrap_or(c.lr0);
                    c.net.hidden = hidden.unwrap_or(c.net.hidden);
                    let (m, report) = chartcons::tagger::train(&train, &dev, &c, |e| {
                        eprint!("epoch {} lr {:.2e} loss {:.4}", e.epoch, e.lr, e.train_loss);
                        if let (Some(b), Some(en)) = (e.dev_begin_accuracy, e.dev_end_accuracy) {
                            eprint!(" dev B {b:.2} E {en:.2}");
                        }
                        eprintln!();
                    })?;
                    eprintln!("kept epoch {}", report.selected_epoch);
                    m.to_json()
                }
                TaggerKind::Logistic => {
                    let mut c = cfg.logistic;
                    c.epochs = epochs.unwrap_or(c.epochs);
                    c.lr = lr.unwrap_or(c.lr);
                    LogisticTagger::train(&train, &c)?.to_json()
                }
            };
            write(Some(&out), &json)
        }
        TaggerCmd::Predict {
            model,
            input,
            theta,
            out,
        } => {
            check_theta(theta)?;
            let t = AnyTagger::load(&model)?;
            let entries: Vec<(usize, BeginEndConstraints)> = sentences(&input)?
                .iter()
                .map(|s| t.predictor().constraints(&s.words, &s.pos, theta))
                .enumerate()
                .collect();
            write(out.as_deref(), &constraints_to_file(&entries))
        }
    }
}

fn parse_cmd(cmd: ParseCmd) -> Result<()> {
    match cmd {
        ParseCmd::Pcfg {
            grammar,
            input,
            source,
            ctf,
            words,
            bin,
            out,
            stats,
            run,
        } => {
            let g = Pcfg::from_text(&read(&grammar)?)
                .with_context(|| format!("grammar {}", grammar.display()))?;
            let input = sentences(&input)?;
            let cons = constraints_for(
                &input,
                source.constraints.as_deref(),
                source.tagger.as_deref(),
                source.theta,
            )?;
            let setup =
                coarse_map(ctf.ctf.as_deref())?.map(|m| CtfSetup::new(&g, m, ctf.ctf_threshold));
            let parser = CkyParser::new(&g);
            let p = PcfgRun {
                parser: &parser,
                ctf: setup.as_ref(),
                pos_terminals: !words,
                markov: bin.markov,
                factoring: bin.factoring,
            };
            let rows = run_corpus(input.len(), run.jobs, run.warmup, |i| {
                p.run(i, &input[i], cons.as_ref().map(|c| &c[i]))
                    .expect("prediction over the input yield")
            });
            finish_parse(&rows, out.as_deref(), stats.as_deref())
        }
        ParseCmd::Tag {
            grammar,
            input,
            source,
            strategy,
            supertag,
            inventory,
            k,
            words,
            head_rules: hr,
            out,
            stats,
            run,
        } => {
            let mut input = sentences(&input)?;
            split_gold(&mut input, &head_rules(hr.as_deref())?)?;
            let cons = constraints_for(
                &input,
                source.constraints.as_deref(),
                source.tagger.as_deref(),
                source.theta,
            )?;
            let rows = match (grammar, supertag, inventory) {
                (_, Some(model), Some(inv_path)) => {
                    let (m, inv) = load_supertagger(&model, &inv_path)?;
                    let a = assignments(&m, &input, k)?;
                    let r = TagRun {
                        source: TagSource::Supertags { inventory: &inv },
                        strategy,
                    };
                    run_corpus(input.len(), run.jobs, run.warmup, |i| {
                        r.run(i, &input[i], cons.as_ref().map(|c| &c[i]), Some(&a[i]))
                            .expect("prediction over the input yield")
                    })
                }
                (Some(path), None, _) => {
                    let g = read_tag_grammar(&read(&path)?)
                        .with_context(|| format!("grammar {}", path.display()))?;
                    let parser = TagParser::new(&g);
                    let r = TagRun {
                        source: TagSource::Grammar {
                            parser: &parser,
                            pos_terminals: !words,
                        },
                        strategy,
                    };
                    run_corpus(input.len(), run.jobs, run.warmup, |i| {
                        r.run(i, &input[i], cons.as_ref().map(|c| &c[i]), None)
                            .expect("prediction over the input yield")
                    })
                }
                _ => return usage("parse tag needs --grammar or --supertag with --inventory"),
            };
            finish_parse(&rows, out.as_deref(), stats.as_deref())
        }
    }
}

fn supertag_cmd(cmd: SupertagCmd, cfg: &Config) -> Result<()> {
    match cmd {
        SupertagCmd::Train {
            treebank: path,
            head_rules: hr,
            kind,
            out,
            inventory_out,
            epochs,
        } => {
            let corpus = extract_spinal(&treebank(&path)?, &head_rules(hr.as_deref())?)?;
            let inv = extract_inventory(&corpus);
            let data = supertag_corpus(&corpus);
            let json = match kind {
                SupertaggerKind::Frequency => FrequencyModel::train(&data, inv.len())?.to_json(),
                SupertaggerKind::Lstm => {
                    let mut c = cfg.supertag;
                    c.epochs = epochs.unwrap_or(c.epochs);
                    NeuralSupertagger::train(&data, inv.len(), &c)?.to_json()
                }
            };
            eprintln!("{} elementary trees", inv.len());
            write(Some(&inventory_out), &inv.to_text())?;
            write(Some(&out), &json)
        }
        SupertagCmd::Predict {
            model,
            inventory,
            input,
            k,
            out,
        } => {
            let (m, inv) = load_supertagger(&model, &inventory)?;
            let mut text = String::new();
            for a in assignments(&m, &sentences(&input)?, k)? {
                text.push_str(&assignment_to_line(&inv, &a));
                text.push('\n');
            }
            write(out.as_deref(), &text)
        }
    }
}

/// Predicted trees one per line, `()` marking a failed parse.
fn read_predictions(path: &Path) -> Result<Vec<Option<Tree>>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == "()" {
            out.push(None);
            continue;
        }
        let mut trees =
            read_ptb(line).with_context(|| format!("{} line {}", path.display(), idx + 1))?;
        if trees.len() != 1 {
            bail!(
                "{} line {}: expected one tree per line",
                path.display(),
                idx + 1
            );
        }
        out.push(trees.pop());
    }
    Ok(out)
}

fn eval_cmd(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Parseval { gold, pred, out } => {
            let gold = treebank(&gold)?;
            let pred = read_predictions(&pred)?;
            if gold.len() != pred.len() {
                bail!("{} gold trees but {} predictions", gold.len(), pred.len());
            }
            let parsed: Vec<usize> = (0..gold.len()).filter(|&i| pred[i].is_some()).collect();
            let all = score_corpus(&gold, &pred)?;
            let only = score_corpus(
                &parsed.iter().map(|&i| gold[i].clone()).collect::<Vec<_>>(),
                &parsed.iter().map(|&i| pred[i].clone()).collect::<Vec<_>>(),
            )?;
            let mut text = format!("# parseval: {PARSEVAL_CONVENTIONS}\nscope\tsentences\tmatched\tgold\tpred\tprecision\trecall\tf\n");
            for (name, n, c) in [("all", gold.len(), all), ("parsed", parsed.len(), only)] {
                let s = c.score();
                writeln!(
                    text,
                    "{name}\t{n}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}",
                    c.matched, c.gold, c.pred, s.precision, s.recall, s.f
                )
                .unwrap();
            }
            write(out.as_deref(), &text)
        }
    }
}

fn check_runs(runs: &[String], known: &[&str]) -> Result<()> {
    if runs.is_empty() {
        return usage(format!("--runs is empty; choose from {}", known.join(", ")));
    }
    for r in runs {
        if !known.contains(&r.as_str()) {
            return usage(format!(
                "unknown run '{r}'; choose from {}",
                known.join(", ")
            ));
        }
    }
    Ok(())
}

/// Replace gold trees by their split-modifier form.
fn split_gold(input: &mut [Sentence], rules: &HeadRules) -> Result<()> {
    for s in input {
        if let Some(g) = &s.gold {
            s.gold = Some(tag_gold_tree(g, rules)?);
        }
    }
    Ok(())
}

fn bench_constraints(
    trees: &[Tree],
    input: &[Sentence],
    opts: &BenchOpts,
) -> Result<Vec<BeginEndConstraints>> {
    match &opts.tagger {
        Some(p) => Ok(constraints_for(input, None, Some(p), opts.theta)?.expect("tagger given")),
        None => Ok(trees.iter().map(gold_constraints).collect()),
    }
}

fn finish_bench(runs: Vec<(String, Vec<SentenceResult>)>, opts: &BenchOpts) -> Result<()> {
    let baseline = opts.baseline.clone().unwrap_or_else(|| runs[0].0.clone());
    let reports = compare_runs(&runs, &baseline).map_err(|e| Usage(e.to_string()))?;
    let table = reports_to_tsv(&reports);
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (name, rows) in &runs {
            write(Some(&dir.join(format!("{name}.tsv"))), &to_tsv(rows))?;
        }
        write(Some(&dir.join("report.tsv")), &table)?;
    }
    print!("{table}");
    Ok(())
}

fn bench_cmd(cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Pcfg {
            grammar,
            opts,
            ctf_map,
            ctf_threshold,
            words,
            bin,
        } => {
            check_runs(&opts.runs, &["none", "cc", "ctf", "ctf+cc"])?;
            let g = Pcfg::from_text(&read(&grammar)?)
                .with_context(|| format!("grammar {}", grammar.display()))?;
            let trees = treebank(&opts.treebank)?;
            let input: Vec<Sentence> = trees.iter().map(Sentence::from_tree).collect();
            let cons = bench_constraints(&trees, &input, &opts)?;
            let map = match &ctf_map {
                Some(p) => CoarseMap::from_text(&read(p)?)?,
                None => CoarseMap::new(),
            };
            let setup = CtfSetup::new(&g, map, ctf_threshold);
            let parser = CkyParser::new(&g);
            let mut runs = Vec::new();
            for name in &opts.runs {
                let use_ctf = name.starts_with("ctf");
                let use_cc = name.ends_with("cc");
                let p = PcfgRun {
                    parser: &parser,
                    ctf: use_ctf.then_some(&setup),
                    pos_terminals: !words,
                    markov: bin.markov,
                    factoring: bin.factoring,
                };
                let rows = run_corpus(input.len(), opts.jobs, opts.warmup, |i| {
                    p.run(i, &input[i], use_cc.then(|| &cons[i]))
                        .expect("prediction over the input yield")
                });
                eprintln!(
                    "{name}: {}/{} parsed",
                    rows.iter().filter(|r| r.status == Status::Parsed).count(),
                    rows.len()
                );
                runs.push((name.clone(), rows));
            }
            finish_bench(runs, &opts)
        }
        BenchCmd::Tag {
            grammar,
            opts,
            supertag,
            inventory,
            k,
            words,
            head_rules: hr,
        } => {
            check_runs(
                &opts.runs,
                &[
                    "full",
                    "full+cc",
                    "full+be",
                    "supertag",
                    "supertag+cc",
                    "supertag+be",
                ],
            )?;
            let rules = head_rules(hr.as_deref())?;
            let trees = treebank(&opts.treebank)?
                .iter()
                .map(|t| tag_gold_tree(t, &rules))
                .collect::<Result<Vec<_>, _>>()?;
            let input: Vec<Sentence> = trees.iter().map(Sentence::from_tree).collect();
            let cons = bench_constraints(&trees, &input, &opts)?;
            let full = match &grammar {
                Some(p) => Some(
                    read_tag_grammar(&read(p)?)
                        .with_context(|| format!("grammar {}", p.display()))?,
                ),
                None => None,
            };
            let parser = full.as_ref().map(TagParser::new);
            let tagged = match (&supertag, &inventory) {
                (Some(m), Some(i)) => {
                    let (m, inv) = load_supertagger(m, i)?;
                    let a = assignments(&m, &input, k)?;
                    Some((inv, a))
                }
                _ => None,
            };
            let mut runs = Vec::new();
            for name in &opts.runs {
                let (base, strategy) = match name.split_once('+') {
                    Some((b, "cc")) => (b, Some(TagStrategy::Cc)),
                    Some((b, _)) => (b, Some(TagStrategy::Be)),
                    None => (name.as_str(), None),
                };
                let rows = if base == "full" {
                    let Some(parser) = &parser else {
                        return usage(format!("run '{name}' needs --grammar"));
                    };
                    let r = TagRun {
                        source: TagSource::Grammar {
                            parser,
                            pos_terminals: !words,
                        },
                        strategy: strategy.unwrap_or(TagStrategy::Cc),
                    };
                    run_corpus(input.len(), opts.jobs, opts.warmup, |i| {
                        r.run(i, &input[i], strategy.map(|_| &cons[i]), None)
                            .expect("prediction over the input yield")
                    })
                } else {
                    let Some((inv, a)) = &tagged else {
                        return usage(format!("run '{name}' needs --supertag and --inventory"));
                    };
                    let r = TagRun {
                        source: TagSource::Supertags { inventory: inv },
                        strategy: strategy.unwrap_or(TagStrategy::Cc),
                    };
                    run_corpus(input.len(), opts.jobs, opts.warmup, |i| {
                        r.run(i, &input[i], strategy.map(|_| &cons[i]), Some(&a[i]))
                            .expect("prediction over the input yield")
                    })
                };
                eprintln!(
                    "{name}: {}/{} parsed",
                    rows.iter().filter(|r| r.status == Status::Parsed).count(),
                    rows.len()
                );
                runs.push((name.clone(), rows));
            }
            finish_bench(runs, &opts)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Treebank(c) => treebank_cmd(c, &cfg),
        Command::Constraints(c) => constraints_cmd(c),
        Command::Tagger(c) => tagger_cmd(c, &cfg),
        Command::Parse(c) => parse_cmd(c),
        Command::Supertag(c) => supertag_cmd(c, &cfg),
        Command::Eval(c) => eval_cmd(c),
        Command::Bench(c) => bench_cmd(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
