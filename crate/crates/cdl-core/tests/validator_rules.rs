use cdl_core::ast;
use cdl_core::index::{build_index, load_rename_map, LibraryIndex};
use cdl_core::interp::{self, SignalValue};
use cdl_core::validate::{
    report_lines, seed_fault, validate, FaultClass, PolarityProbe, SeedError, Severity, TaskSpec,
};
use cdl_core::ast::SignalKind;
use std::fs;
use std::path::PathBuf;

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/modelica")
        .join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {}", path.display(), e))
}

fn shipped_index() -> LibraryIndex {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/library");
    let mut idx = build_index(&root, "Buildings 10.1.x").unwrap();
    idx.rename_map = load_rename_map(&root.join("rename_map.tsv")).unwrap();
    idx
}

#[test]
fn shipped_fixtures_pass_clean() {
    let idx = shipped_index();
    for name in ["task4_ai.mo", "plant_requests_human.mo"] {
        let block = ast::parse(&fixture(name)).unwrap();
        let report = validate(&block, &idx, None);
        let errors: Vec<_> = report.errors().collect();
        assert!(errors.is_empty(), "{} errors: {:?}", name, errors);
        assert!(report.passed);
    }
}

#[test]
fn renamed_class_yields_version_drift_warning() {
    let idx = shipped_index();
    let src = fixture("task4_ai.mo").replace("Reals.Subtract", "Continuous.Subtract");
    let block = ast::parse(&src).unwrap();
    let report = validate(&block, &idx, None);
    assert!(report.passed, "warnings must not fail the block");
    let drift: Vec<_> = report
        .diagnostics
        .iter()
        .filter(|d| d.fault_class == Some(FaultClass::VersionDrift))
        .collect();
    assert_eq!(drift.len(), 1);
    assert_eq!(drift[0].severity, Severity::Warning);
    assert!(drift[0]
        .message
        .contains("Buildings.Controls.OBC.CDL.Reals.Subtract"));
}

#[test]
fn unknown_class_is_an_error() {
    let idx = shipped_index();
    let src = fixture("task4_ai.mo").replace("Reals.Subtract sub1", "Reals.Subtrat sub1");
    let block = ast::parse(&src).unwrap();
    let report = validate(&block, &idx, None);
    assert!(!report.passed);
    assert!(report.has_fault(FaultClass::UnknownClass));
}

#[test]
fn foreign_class_is_a_scope_violation() {
    let idx = shipped_index();
    let src = "block B
  Buildings.Controls.OBC.CDL.Interfaces.RealInput u;
  Buildings.Controls.OBC.CDL.Interfaces.RealOutput y;
  Vendor.Proprietary.Magic mag;
equation
  connect(u, mag.u);
  connect(mag.y, y);
end B;
";
    let report = validate(&ast::parse(src).unwrap(), &idx, None);
    assert!(!report.passed);
    assert!(report.has_fault(FaultClass::ScopeViolation));
    // the foreign class is not double-reported as unknown by R1
    assert!(!report.has_fault(FaultClass::UnknownClass));
}

#[test]
fn boolean_to_real_connect_is_type_mismatch() {
    let idx = shipped_index();
    let src = "block B
  Buildings.Controls.OBC.CDL.Interfaces.BooleanInput u;
  Buildings.Controls.OBC.CDL.Interfaces.RealOutput y;
  Buildings.Controls.OBC.CDL.Logical.Not n;
  Buildings.Controls.OBC.CDL.Reals.Abs a;
equation
  connect(u, n.u);
  connect(n.y, a.u);
  connect(a.y, y);
end B;
";
    let report = validate(&ast::parse(src).unwrap(), &idx, None);
    assert!(!report.passed);
    let bad: Vec<_> = report
        .diagnostics
        .iter()
        .filter(|d| d.fault_class == Some(FaultClass::TypeMismatch))
        .collect();
    assert_eq!(bad.len(), 1);
    assert_eq!(bad[0].rule_id, "R3");
    assert!(bad[0].message.contains("Boolean"));
}

#[test]
fn input_to_input_connect_is_type_mismatch() {
    let idx = shipped_index();
    let src = "block B
  Buildings.Controls.OBC.CDL.Interfaces.BooleanInput u;
  Buildings.Controls.OBC.CDL.Interfaces.BooleanOutput y;
  Buildings.Controls.OBC.CDL.Logical.Not n1;
  Buildings.Controls.OBC.CDL.Logical.Not n2;
equation
  connect(u, n1.u);
  connect(n1.u, n2.u);
  connect(n1.y, y);
end B;
";
    let report = validate(&ast::parse(src).unwrap(), &idx, None);
    assert!(report.has_fault(FaultClass::TypeMismatch));
}

#[test]
fn undriven_output_and_unused_instance() {
    let idx = shipped_index();
    let src = "block B
  Buildings.Controls.OBC.CDL.Interfaces.BooleanInput u;
  Buildings.Controls.OBC.CDL.Interfaces.BooleanOutput y;
  Buildings.Controls.OBC.CDL.Logical.Not idle;
equation
  connect(u, y);
end B;
";
    // y is driven here, but add a second output with no wire
    let src = src.replace(
        "  Buildings.Controls.OBC.CDL.Logical.Not idle;",
        "  Buildings.Controls.OBC.CDL.Interfaces.BooleanOutput yDead;
  Buildings.Controls.OBC.CDL.Logical.Not idle;",
    );
    let report = validate(&ast::parse(&src).unwrap(), &idx, None);
    assert!(!report.passed);
    let r4: Vec<_> = report
        .diagnostics
        .iter()
        .filter(|d| d.rule_id == "R4")
        .collect();
    let errors: Vec<_> = r4.iter().filter(|d| d.severity == Severity::Error).collect();
    let warnings: Vec<_> = r4
        .iter()
        .filter(|d| d.severity == Severity::Warning)
        .collect();
    assert_eq!(errors.len(), 1, "undriven output");
    assert!(errors[0].message.contains("yDead"));
    assert_eq!(warnings.len(), 1, "unused instance");
    assert!(warnings[0].message.contains("idle"));
}

#[test]
fn conditional_output_exempt_from_reachability() {
    let idx = shipped_index();
    let block = ast::parse(&fixture("plant_requests_human.mo")).unwrap();
    // the human fixture's guarded outputs are driven; strip the connects
    // that feed one of them and the guard still shields it from R4
    let mut pruned = block.clone();
    pruned.connects.retain(|eq| {
        eq.source.to_string() != "yChiWatResReq" && eq.target.to_string() != "yChiWatResReq"
    });
    let report = validate(&pruned, &idx, None);
    assert!(
        !report
            .diagnostics
            .iter()
            .any(|d| d.rule_id == "R4" && d.message.contains("yChiWatResReq")),
        "guarded output must be exempt: {:?}",
        report.diagnostics
    );
}

fn two_controller_block() -> String {
    "block B
  Buildings.Controls.OBC.CDL.Interfaces.RealInput u_s;
  Buildings.Controls.OBC.CDL.Interfaces.RealInput u_m;
  Buildings.Controls.OBC.CDL.Interfaces.RealOutput yVal;
  Buildings.Controls.OBC.CDL.Reals.P con1(k=1);
  Buildings.Controls.OBC.CDL.Reals.P con2(k=2);
equation
  connect(u_s, con1.u_s);
  connect(u_m, con1.u_m);
  connect(u_s, con2.u_s);
  connect(u_m, con2.u_m);
  connect(con1.y, yVal);
  connect(con2.y, yVal);
end B;
"
    .to_string()
}

#[test]
fn duplicate_controller_path_detected() {
    let idx = shipped_index();
    let report = validate(&ast::parse(&two_controller_block()).unwrap(), &idx, None);
    assert!(!report.passed);
    let dup: Vec<_> = report
        .diagnostics
        .iter()
        .filter(|d| d.fault_class == Some(FaultClass::DuplicatePath))
        .collect();
    assert_eq!(dup.len(), 1);
    assert_eq!(dup[0].rule_id, "R5");
    assert!(dup[0].message.contains("con1") && dup[0].message.contains("con2"));
}

fn damper_block(reverse: bool) -> String {
    format!(
        "block Damper
  Buildings.Controls.OBC.CDL.Interfaces.RealInput dpBui;
  Buildings.Controls.OBC.CDL.Interfaces.RealOutput yDam;
  Buildings.Controls.OBC.CDL.Reals.Sources.Constant dpSet(k=100);
  Buildings.Controls.OBC.CDL.Reals.P con(k=0.01, reverseActing={reverse});
equation
  connect(dpSet.y, con.u_s);
  connect(dpBui, con.u_m);
  connect(con.y, yDam);
end Damper;
"
    )
}

fn damper_task() -> TaskSpec {
    TaskSpec {
        task_id: "5".to_string(),
        inputs: vec![("dpBui".to_string(), SignalKind::Real)],
        outputs: vec![("yDam".to_string(), SignalKind::Real)],
        probes: vec![PolarityProbe {
            output: "yDam".to_string(),
            expected_sign: 1,
            low: vec![("dpBui".to_string(), SignalValue::Real(50.0))],
            high: vec![("dpBui".to_string(), SignalValue::Real(150.0))],
            step_size: 10.0,
            hold_steps: 3,
        }],
    }
}

#[test]
fn polarity_probe_flags_inverted_controller() {
    let idx = shipped_index();
    let task = damper_task();
    // direct acting: damper opens as pressure rises above setpoint
    let good = ast::parse(&damper_block(false)).unwrap();
    let report = validate(&good, &idx, Some(&task));
    assert!(report.passed, "{:?}", report.diagnostics);
    assert_eq!(report.checked_rules, vec!["R1", "R2", "R3", "R4", "R5", "R6", "R7"]);

    let flipped = ast::parse(&damper_block(true)).unwrap();
    let report = validate(&flipped, &idx, Some(&task));
    assert!(!report.passed);
    let inv: Vec<_> = report
        .diagnostics
        .iter()
        .filter(|d| d.fault_class == Some(FaultClass::InvertedDirection))
        .collect();
    assert_eq!(inv.len(), 1);
    assert_eq!(inv[0].rule_id, "R7");
}

#[test]
fn interface_mismatch_against_task() {
    let idx = shipped_index();
    let mut task = damper_task();
    task.inputs
        .push(("u1SupFan".to_string(), SignalKind::Boolean));
    task.probes.clear();
    let report = validate(&ast::parse(&damper_block(false)).unwrap(), &idx, Some(&task));
    assert!(!report.passed);
    let r6: Vec<_> = report
        .diagnostics
        .iter()
        .filter(|d| d.rule_id == "R6")
        .collect();
    assert_eq!(r6.len(), 1);
    assert!(r6[0].message.contains("u1SupFan"));
}

/// Brute-force cross-check: R3's verdict on every connect equals a direct
/// kind/direction comparison of the resolved endpoints.
#[test]
fn r3_matches_direct_endpoint_comparison() {
    let idx = shipped_index();
    for name in ["task4_ai.mo", "plant_requests_human.mo"] {
        let block = ast::parse(&fixture(name)).unwrap();
        let report = validate(&block, &idx, None);
        let flagged: Vec<usize> = report
            .diagnostics
            .iter()
            .filter(|d| d.rule_id == "R3")
            .filter_map(|d| match d.location {
                cdl_core::validate::Location::Connect(i) => Some(i),
                _ => None,
            })
            .collect();
        for (ci, eq) in block.connects.iter().enumerate() {
            let expect_bad = direct_connect_check(&block, eq).is_some();
            assert_eq!(
                flagged.contains(&ci),
                expect_bad,
                "{} connect[{}] connect({}, {})",
                name,
                ci,
                eq.source,
                eq.target
            );
        }
    }
}

/// Independent re-derivation of one connect's legality, used as the R3
/// oracle. Returns Some(reason) when the connect is ill-formed.
fn direct_connect_check(block: &ast::ModelicaBlock, eq: &ast::ConnectEquation) -> Option<String> {
    #[derive(PartialEq)]
    enum Dir {
        Src,
        Sink,
    }
    let classify = |p: &ast::PortPath| -> Option<(Dir, SignalKind)> {
        match p.segments.as_slice() {
            [name] => {
                let c = block.connector(name)?;
                Some((
                    if c.direction == ast::Direction::Input {
                        Dir::Src
                    } else {
                        Dir::Sink
                    },
                    c.signal_kind,
                ))
            }
            [inst, port] => {
                let i = block.instance(inst)?;
                let (ins, outs) = interp::class_ports(&i.class_ref)?;
                if let Some((_, k)) = ins.iter().find(|(n, _)| n == port) {
                    Some((Dir::Sink, *k))
                } else {
                    outs.iter()
                        .find(|(n, _)| n == port)
                        .map(|(_, k)| (Dir::Src, *k))
                }
            }
            _ => None,
        }
    };
    let (da, ka) = classify(&eq.source)?;
    let (db, kb) = classify(&eq.target)?;
    if da == db {
        return Some("no output/input pairing".to_string());
    }
    if ka != kb {
        return Some(format!("{} vs {}", ka, kb));
    }
    None
}

#[test]
fn seeded_faults_are_all_detected() {
    let idx = shipped_index();
    let task4 = ast::parse(&fixture("task4_ai.mo")).unwrap();
    let pi_block = ast::parse(
        "block B
  Buildings.Controls.OBC.CDL.Interfaces.RealInput TZonSet;
  Buildings.Controls.OBC.CDL.Interfaces.RealInput TZon;
  Buildings.Controls.OBC.CDL.Interfaces.BooleanInput uEna;
  Buildings.Controls.OBC.CDL.Interfaces.RealOutput yValPos;
  Buildings.Controls.OBC.CDL.Reals.PI conPI(k=1, Ti=120, yBia=1, yDis=1);
equation
  connect(TZonSet, conPI.u_s);
  connect(TZon, conPI.u_m);
  connect(uEna, conPI.uEna);
  connect(conPI.y, yValPos);
end B;
",
    )
    .unwrap();
    let task = TaskSpec {
        task_id: "2".to_string(),
        inputs: vec![
            ("TZonSet".to_string(), SignalKind::Real),
            ("TZon".to_string(), SignalKind::Real),
            ("uEna".to_string(), SignalKind::Boolean),
        ],
        outputs: vec![("yValPos".to_string(), SignalKind::Real)],
        probes: vec![PolarityProbe {
            output: "yValPos".to_string(),
            // reverse acting: the valve closes as the zone overshoots
            expected_sign: -1,
            low: vec![
                ("TZonSet".to_string(), SignalValue::Real(294.0)),
                ("TZon".to_string(), SignalValue::Real(293.0)),
                ("uEna".to_string(), SignalValue::Boolean(true)),
            ],
            high: vec![
                ("TZonSet".to_string(), SignalValue::Real(294.0)),
                ("TZon".to_string(), SignalValue::Real(295.0)),
                ("uEna".to_string(), SignalValue::Boolean(true)),
            ],
            step_size: 10.0,
            hold_steps: 2,
        }],
    };
    let clean = validate(&pi_block, &idx, Some(&task));
    assert!(clean.passed, "{:?}", clean.diagnostics);

    for (host, fault, with_task) in [
        (&task4, FaultClass::BrokenConnection, false),
        (&task4, FaultClass::UnknownClass, false),
        (&pi_block, FaultClass::DuplicatePath, false),
        (&pi_block, FaultClass::InvertedDirection, true),
    ] {
        for seed in [1u64, 7, 42] {
            let (mutated, record) = seed_fault(host, fault, seed).unwrap();
            let task_arg = if with_task { Some(&task) } else { None };
            let report = validate(&mutated, &idx, task_arg);
            assert!(
                report.has_fault(fault),
                "seed {} fault {:?} undetected ({}); diags: {:?}",
                seed,
                fault,
                record.description,
                report.diagnostics
            );
            assert!(!report.passed);
        }
    }
}

#[test]
fn seed_fault_is_deterministic_and_minimal() {
    let task4 = ast::parse(&fixture("task4_ai.mo")).unwrap();
    let (m1, r1) = seed_fault(&task4, FaultClass::BrokenConnection, 9).unwrap();
    let (m2, r2) = seed_fault(&task4, FaultClass::BrokenConnection, 9).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(r1, r2);
    assert_eq!(m1.connects.len(), task4.connects.len() - 1);
    assert_eq!(m1.instances.len(), task4.instances.len());

    let (m3, _) = seed_fault(&task4, FaultClass::UnknownClass, 9).unwrap();
    let diff: usize = m3
        .instances
        .iter()
        .zip(task4.instances.iter())
        .filter(|(a, b)| a != b)
        .count();
    assert_eq!(diff, 1, "exactly one instance mutated");
}

#[test]
fn uninjectable_fault_reports_not_injectable() {
    let task4 = ast::parse(&fixture("task4_ai.mo")).unwrap();
    // Task4 has no P/PI controller to duplicate
    assert!(matches!(
        seed_fault(&task4, FaultClass::DuplicatePath, 1),
        Err(SeedError::NotInjectable(FaultClass::DuplicatePath))
    ));
    assert!(matches!(
        seed_fault(&task4, FaultClass::VersionDrift, 1),
        Err(SeedError::NotInjectable(_))
    ));
}

#[test]
fn diagnostics_render_as_tab_separated_lines() {
    let idx = shipped_index();
    let report = validate(&ast::parse(&two_controller_block()).unwrap(), &idx, None);
    let text = report_lines(&report);
    let line = text
        .lines()
        .find(|l| l.contains("duplicate_path"))
        .expect("R5 line present");
    let fields: Vec<&str> = line.split('\t').collect();
    assert_eq!(fields.len(), 5);
    assert_eq!(fields[0], "error");
    assert_eq!(fields[1], "R5");
    assert_eq!(fields[2], "duplicate_path");
    assert!(fields[3].starts_with("connect["));
}

#[test]
fn reports_are_deterministic_and_ordered() {
    let idx = shipped_index();
    let src = fixture("task4_ai.mo")
        .replace("Reals.Subtract sub1", "Reals.Subtrat sub1")
        .replace("Logical.Not not3K", "Logical.Knot not3K");
    let block = ast::parse(&src).unwrap();
    let a = validate(&block, &idx, None);
    let b = validate(&block, &idx, None);
    assert_eq!(a, b);
    let keys: Vec<(&str, cdl_core::validate::Location)> = a
        .diagnostics
        .iter()
        .map(|d| (d.rule_id, d.location))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}
