//! The deterministic proposers, driven through report text alone.

use opto_optim::llmclient::{ChatBackend, ChatMessage, ScriptedBackend};
use opto_optim::scripted::{detect_env_kind, scripted_propose, EnvKind, ReportView};
use opto_optim::suggestion::parse_response;
use opto_core::Value;

fn binmatch_report(feedback: &str) -> String {
    format!(
        "#Instruction\nimprove the bits\n\n#Code\nc1 = check1(bit2)\nc2 = check2(c1, bit0)\n\n#Documentation\n[check1] Checks one digit.\n[check2] Checks one digit.\n\n#Variables\nbool bit2 = true\nbool bit0 = false\n\n#Constraints\n\n#Inputs\n\n#Others\nbool c1 = true\n\n#Outputs\nbool c2 = false\n\n#Feedback:\n{feedback}"
    )
}

#[test]
fn binmatch_proposer_flips_exactly_the_failing_checks_bit() {
    let view = ReportView::parse(&binmatch_report("2nd check failed")).unwrap();
    assert_eq!(detect_env_kind(&view), Some(EnvKind::BinaryMatch));
    let mut rng = 0;
    let suggestion = scripted_propose(&view, None, EnvKind::BinaryMatch, &mut rng).unwrap();
    assert_eq!(suggestion.updates.len(), 1);
    assert_eq!(suggestion.updates["bit0"], Value::Boolean(true));
}

#[test]
fn binmatch_success_terminates() {
    let view = ReportView::parse(&binmatch_report("All checks succeeded")).unwrap();
    let mut rng = 0;
    let suggestion = scripted_propose(&view, None, EnvKind::BinaryMatch, &mut rng).unwrap();
    assert!(suggestion.terminate);
}

#[test]
fn numeric_report_yields_a_parseable_numeric_suggestion() {
    let report = "#Instruction\ni\n\n#Code\ny = neg(x)\n\n#Documentation\n[neg] Negates.\n\n#Variables\nfloat x = 1.5\n\n#Constraints\n\n#Inputs\n\n#Others\n\n#Outputs\nfloat y = -1.5\n\n#Feedback:\nThe output should be larger.";
    let backend = ScriptedBackend::new(0);
    let user = format!(
        "Now you see problem instance:\n\n================================\n{report}\n================================\n\nYour response:\n"
    );
    let reply = backend
        .complete(&[ChatMessage::user(user)], None)
        .unwrap();
    let suggestion = parse_response(&reply.content).unwrap();
    assert!(!suggestion.terminate);
    assert!(matches!(suggestion.updates["x"], Value::Number(_)));
}

#[test]
fn garbage_input_terminates_instead_of_crashing() {
    let backend = ScriptedBackend::new(0);
    for content in ["", "???", "================================\nnot a report\n================================"] {
        let reply = backend
            .complete(&[ChatMessage::user(content.to_string())], None)
            .unwrap();
        assert_eq!(reply.content, "TERMINATE", "input {content:?}");
    }
}

#[test]
fn report_view_recovers_sections_and_code_blocks() {
    let report = "#Instruction\ndo the thing\n\n#Code\ntarget = act(map, plan)\n\n#Documentation\n[act] Picks a coordinate.\n\n#Variables\n(code) act_code = ```\nfn act(map, plan) { [0.0, 0.0] }\n```\n\n#Constraints\n\n#Inputs\nfloat plan = 0.0\n\n#Others\n\n#Outputs\nlist target = [0.0, 0.0]\n\n#Feedback:\nMiss at (0, 0).";
    let view = ReportView::parse(report).unwrap();
    assert_eq!(view.instruction, "do the thing");
    assert_eq!(view.code_lines, vec!["target = act(map, plan)"]);
    assert_eq!(view.feedback, "Miss at (0, 0).");
    let code = view.first_of_type("(code)").unwrap();
    assert_eq!(code.name, "act_code");
    assert_eq!(code.raw, "fn act(map, plan) { [0.0, 0.0] }");
    assert_eq!(detect_env_kind(&view), Some(EnvKind::BattleshipHeuristic));
}
