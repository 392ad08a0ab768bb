//! Prompt layout and history truncation over random conversations.

use proptest::prelude::*;
use tourguide_core::phase::PhaseId;
use tourguide_core::prompt::{PromptContext, PromptLibrary, PromptSections, SYSTEM_LABEL};
use tourguide_core::turn::{DialogueTurn, Speaker};

fn history(texts: &[String]) -> Vec<DialogueTurn> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let speaker = if i % 2 == 0 { Speaker::System } else { Speaker::Customer };
            DialogueTurn::new(speaker, t.clone(), PhaseId::IntroductionIceBreaker, i as u64)
        })
        .collect()
}

proptest! {
    #[test]
    fn truncation_keeps_a_suffix_within_budget(
        texts in prop::collection::vec("[あ-ん京都 ]{1,40}", 0..30),
        max_chars in 200usize..3000,
    ) {
        let library = PromptLibrary::builtin().with_max_chars(max_chars);
        let turns = history(&texts);
        let full = PromptLibrary::builtin().with_max_chars(usize::MAX).render("icebreak", &PromptContext::new(), &turns).unwrap();
        let prompt = library.render("icebreak", &PromptContext::new(), &turns).unwrap();

        let sections = PromptSections::parse(&prompt.text).map_err(TestCaseError::fail)?;
        let full_sections = PromptSections::parse(&full.text).map_err(TestCaseError::fail)?;
        prop_assert_eq!(&sections.header, &full_sections.header);
        prop_assert_eq!(&sections.context, &full_sections.context);
        prop_assert_eq!(&sections.shots, &full_sections.shots);
        prop_assert_eq!(sections.cue, format!("{SYSTEM_LABEL}:"));

        prop_assert_eq!(sections.history.len(), prompt.history_turns);
        let kept = &full_sections.history[full_sections.history.len() - prompt.history_turns..];
        prop_assert_eq!(&sections.history[..], kept);

        let fixed_len = full.text.chars().count()
            - full_sections.history.iter().map(|l| l.chars().count() + 1).sum::<usize>();
        if fixed_len <= max_chars {
            prop_assert!(prompt.text.chars().count() <= max_chars);
            // Dropping one fewer turn would not have fit.
            if prompt.history_turns < turns.len() {
                let next = &full_sections.history[full_sections.history.len() - prompt.history_turns - 1];
                prop_assert!(prompt.text.chars().count() + next.chars().count() + 1 > max_chars);
            }
        } else {
            prop_assert_eq!(prompt.history_turns, 0);
        }
    }
}

#[test]
fn long_history_is_cut_to_budget() {
    let texts: Vec<String> = (0..200).map(|i| format!("{i}番目の発話です。京都の紅葉について。")).collect();
    let prompt = PromptLibrary::builtin().with_max_chars(2_000).render("inquiry", &PromptContext::new(), &history(&texts)).unwrap();
    assert!(prompt.text.chars().count() <= 2_000);
    assert!(prompt.history_turns > 0 && prompt.history_turns < 200);
    assert!(prompt.text.contains("199番目"));
    assert!(!prompt.text.contains("\nShoko: 0番目"));
}
