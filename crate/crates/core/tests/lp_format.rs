use std::collections::{BTreeMap, BTreeSet, HashMap};

use d2dcache::exact::{solve_exhaustive, SolveLimits};
use d2dcache::experiments::ScenarioConfig;
use d2dcache::ilp::{build_ilp, emit_ilp, IlpOptions, LpModel, Sense};

#[derive(Debug, Default)]
struct Parsed {
    maximize: bool,
    objective: BTreeMap<String, f64>,
    rows: Vec<(String, BTreeMap<String, f64>, String, f64)>,
    binaries: BTreeSet<String>,
}

/// Reads linear expressions `[+|-] [coef] var ...`.
fn read_terms(tokens: &[&str]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let mut sign = 1.0;
    let mut coef = None;
    for &t in tokens {
        match t {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => match t.parse::<f64>() {
                Ok(c) => coef = Some(c),
                Err(_) => {
                    *out.entry(t.to_string()).or_insert(0.0) += sign * coef.unwrap_or(1.0);
                    sign = 1.0;
                    coef = None;
                }
            },
        }
    }
    out
}

fn read_lp(text: &str) -> Parsed {
    let mut p = Parsed::default();
    let mut section = "";
    let mut pending: Vec<String> = Vec::new();
    let flush = |p: &mut Parsed, section: &str, pending: &mut Vec<String>| {
        if pending.is_empty() {
            return;
        }
        let toks: Vec<&str> = pending.iter().map(String::as_str).collect();
        let body = &toks[1..];
        if section == "objective" {
            p.objective = read_terms(body);
        } else {
            let k = body.iter().position(|t| ["<=", ">=", "="].contains(t)).expect("sense");
            let name = toks[0].trim_end_matches(':').to_string();
            p.rows.push((
                name,
                read_terms(&body[..k]),
                body[k].to_string(),
                body[k + 1].parse().unwrap(),
            ));
        }
        pending.clear();
    };
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with('\\') || trimmed.is_empty() {
            continue;
        }
        let lower = trimmed.to_ascii_lowercase();
        let keyword = match lower.as_str() {
            "maximize" | "minimize" => Some("objective"),
            "subject to" => Some("rows"),
            "binaries" => Some("binaries"),
            "end" => Some("end"),
            _ => None,
        };
        if let Some(k) = keyword {
            flush(&mut p, section, &mut pending);
            if lower == "maximize" {
                p.maximize = true;
            }
            section = k;
            continue;
        }
        for tok in trimmed.split_whitespace() {
            match section {
                "binaries" => {
                    p.binaries.insert(tok.to_string());
                }
                "objective" | "rows" => {
                    if tok.ends_with(':') {
                        flush(&mut p, section, &mut pending);
                    }
                    pending.push(tok.to_string());
                }
                _ => panic!("token outside a section: {tok}"),
            }
        }
    }
    p
}

fn tiny(seed: u64) -> d2dcache::experiments::Scenario {
    let mut c = ScenarioConfig {
        num_ue: 3,
        num_sbs: 1,
        ..ScenarioConfig::default()
    };
    c.network.file_count = 4;
    c.network.num_channels = 2;
    c.network.mbs_cache_bits = 200.0;
    c.network.cell_radius = 60.0;
    c.network.sbs_radius = 40.0;
    c.build(seed).unwrap()
}

fn sense_str(s: Sense) -> &'static str {
    match s {
        Sense::Le => "<=",
        Sense::Ge => ">=",
        Sense::Eq => "=",
    }
}

#[test]
fn written_text_matches_the_model() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..3 {
        let sc = tiny(seed);
        let path = dir.path().join("m.lp");
        let model = emit_ilp(&sc.instance, &sc.popularity, &sc.table, &IlpOptions::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = read_lp(&text);
        assert!(parsed.maximize);

        let expected = build_ilp(&sc.instance, &sc.popularity, &sc.table, &IlpOptions::default()).unwrap();
        assert_eq!(model, expected);
        assert_eq!(parsed.rows.len(), expected.constraints.len());
        for (row, c) in parsed.rows.iter().zip(&expected.constraints) {
            assert_eq!(row.0, c.name);
            let mut terms: BTreeMap<String, f64> = BTreeMap::new();
            for (n, v) in &c.terms {
                *terms.entry(n.clone()).or_insert(0.0) += v;
            }
            assert_eq!(row.1, terms, "row {}", c.name);
            assert_eq!(row.2, sense_str(c.sense));
            assert_eq!(row.3, c.rhs);
        }

        let mut used: BTreeSet<String> = parsed.objective.keys().cloned().collect();
        for row in &parsed.rows {
            used.extend(row.1.keys().cloned());
        }
        assert!(used.is_subset(&parsed.binaries));

        let users = sc.instance.num_ue;
        for u in 0..users {
            for f in 0..sc.instance.num_files() {
                let want = sc.popularity.user_row(u)[f] / users as f64;
                let got = parsed.objective.get(&format!("x_{u}_{f}")).copied().unwrap_or(0.0);
                assert!((got - want).abs() <= 1e-15, "x_{u}_{f}: {got} vs {want}");
            }
        }
        assert_eq!(LpModel::parse(&text).unwrap(), expected);
    }
}

#[test]
fn optimum_satisfies_the_structural_rows() {
    for seed in 0..3 {
        let sc = tiny(seed);
        let inst = &sc.instance;
        let best = solve_exhaustive(inst, &sc.popularity, &sc.table, &SolveLimits::default()).unwrap();
        let a = &best.assignment;
        let mut values = HashMap::new();
        for i in 0..inst.node_count() {
            for f in 0..inst.num_files() {
                values.insert(format!("c_{i}_{f}"), a.caching.get(i, f) as f64);
            }
        }
        for u in 0..inst.num_ue {
            for w in 0..inst.num_channels() {
                values.insert(format!("r_{u}_{w}"), a.channels.get(u, w) as f64);
            }
            for f in 0..inst.num_files() {
                values.insert(format!("x_{u}_{f}"), a.delivery.get(u, f) as f64);
            }
        }
        let parsed = read_lp(
            &build_ilp(inst, &sc.popularity, &sc.table, &IlpOptions::default())
                .unwrap()
                .to_lp_string(),
        );
        let prefixes = ["capacity_", "single_copy_", "one_channel_", "reuse_"];
        let mut checked = 0;
        for (name, terms, sense, rhs) in &parsed.rows {
            if !prefixes.iter().any(|p| name.starts_with(p)) {
                continue;
            }
            let lhs: f64 = terms.iter().map(|(n, c)| c * values[n]).sum();
            let ok = match sense.as_str() {
                "<=" => lhs <= *rhs,
                ">=" => lhs >= *rhs,
                _ => lhs == *rhs,
            };
            assert!(ok, "{name}: {lhs} {sense} {rhs}");
            checked += 1;
        }
        assert_eq!(
            checked,
            inst.node_count() + inst.num_files() + inst.num_ue + inst.num_channels()
        );
        let objective: f64 = parsed
            .objective
            .iter()
            .map(|(n, c)| c * values.get(n).copied().unwrap_or(0.0))
            .sum();
        assert!((objective - best.sdr).abs() <= 1e-12);
    }
}
