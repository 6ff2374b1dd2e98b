//! Regenerates the pinned fixtures: prompt template files, golden prompt
//! renderings, the saved library index, the replay cassette for task 4, and
//! the replay config. Run from the workspace after deliberate changes, then
//! review the diff:
//!
//! ```text
//! cargo run -p cdl-pipeline --example make_fixtures
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use cdl_core::index::{build_index, load_rename_map, save_index};
use cdl_pipeline::gateway::{Cassette, Gateway, ProviderConfig, ScriptedTransport};
use cdl_pipeline::orchestrate::{run_session, SessionConfig, SessionStatus};
use cdl_pipeline::prompt::{
    basic_logic_prompt, code_generator_template, control_expert_template, iteration_template,
    template_to_string, LogicBlock, LogicVariant,
};
use cdl_pipeline::tasks::{builtin_task, control_task_prompt};

fn fixtures_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn write(path: &Path, content: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, content).unwrap();
    println!("wrote {}", path.display());
}

fn main() {
    let root = fixtures_root();

    // Prompt templates, one file per pipeline role.
    for template in [
        code_generator_template(),
        control_expert_template(),
        iteration_template(),
    ] {
        write(
            &root.join(format!("templates/{}.tmpl", template.role_id)),
            &template_to_string(&template),
        );
    }

    // Golden basic-logic prompts.
    for (block, tag) in [
        (LogicBlock::And, "and"),
        (LogicBlock::Or, "or"),
        (LogicBlock::Not, "not"),
        (LogicBlock::Switch, "switch"),
    ] {
        for (variant, vtag) in [
            (LogicVariant::AMinimal, "a"),
            (LogicVariant::BDetailed, "b"),
        ] {
            let bundle = basic_logic_prompt(block, variant);
            write(
                &root.join(format!("prompts/golden/basic_{tag}_{vtag}.txt")),
                &bundle.user_text,
            );
        }
    }

    // Golden control-task prompts for the shipped tasks.
    for id in 1..=5 {
        let task = builtin_task(id).unwrap();
        write(
            &root.join(format!("prompts/golden/task{id}_prompt.txt")),
            &control_task_prompt(&task),
        );
    }

    // Saved library index.
    let lib_root = root.join("library");
    let index = build_index(&lib_root, "Buildings 10.1.x").unwrap();
    let index_path = root.join("index/cdl.idx");
    fs::create_dir_all(index_path.parent().unwrap()).unwrap();
    save_index(&index, &index_path).unwrap();
    println!("wrote {}", index_path.display());

    // Replay cassette for task 4: the selector reply, a first generation
    // with a misspelled class path, and the corrected module. Recording a
    // real session pins the request keys to the exact rendered prompts.
    let mut index = index;
    index.rename_map = load_rename_map(&lib_root.join("rename_map.tsv")).unwrap();
    let task = builtin_task(4).unwrap();
    let select_reply = "\
- Buildings.Controls.OBC.CDL.Reals.Subtract
- Buildings.Controls.OBC.CDL.Reals.GreaterThreshold
- Buildings.Controls.OBC.CDL.Logical.TrueDelay
- Buildings.Controls.OBC.CDL.Reals.Hysteresis
- Buildings.Controls.OBC.CDL.Integers.Switch
- Buildings.Controls.OBC.CDL.Integers.Sources.Constant"
        .to_string();
    let clean = fs::read_to_string(root.join("modelica/reference/task4.mo")).unwrap();
    let broken = clean.replace(
        "Buildings.Controls.OBC.CDL.Reals.Subtract supTemDif",
        "Buildings.Controls.OBC.CDL.Reals.Subtrat supTemDif",
    );
    assert_ne!(clean, broken, "typo substitution must take effect");
    let generate_reply = format!("```modelica\n{broken}```");
    let transport = Rc::new(ScriptedTransport::new([
        select_reply,
        generate_reply,
        clean,
    ]));
    let provider = ProviderConfig {
        provider: "scripted".to_string(),
        base_url: String::new(),
        model_id: "claude-sonnet-4".to_string(),
        auth_env_var: "CDL_API_KEY".to_string(),
        timeout_s: 60,
        max_tokens: 4096,
    };
    let mut gateway = Gateway::record(
        provider,
        Box::new(transport.clone()),
        Cassette::new("task4"),
    );
    let config = SessionConfig::new("task4", "claude-sonnet-4");
    let session = run_session(&task, &index, &config, &mut gateway);
    assert_eq!(session.status, SessionStatus::Converged, "{session:?}");
    assert_eq!(session.compile_iters, 2);
    assert_eq!(transport.calls(), 3);
    let cassette_path = root.join("cassettes/task4.cassette");
    fs::create_dir_all(cassette_path.parent().unwrap()).unwrap();
    gateway.cassette().unwrap().save(&cassette_path).unwrap();
    println!("wrote {}", cassette_path.display());

    // Replay config; paths are relative to the config file's directory.
    write(
        &root.join("configs/ci.cfg"),
        "\
[library]
root=../library
version=Buildings 10.1.x
rename_map=../library/rename_map.tsv
index=../index/cdl.idx

[provider]
name=replay
model_id=claude-sonnet-4
auth_env_var=CDL_API_KEY
timeout_s=60
max_tokens=4096

[loops]
max_compile_iters=3
max_sim_iters=2
ai_eval=false

[simulation]
step_size=10
horizon=3600

[run]
mode=replay
cassette=../cassettes/task4.cassette
out_dir=../../sessions
",
    );
}
