//! The dialog simulator and its next-utterance oracle.
//!
//! The simulator plays both sides of a Task-5-style reservation dialog.
//! Every time the system speaks it asks [`enumerate_valid_next`] for the
//! full set of acts it could take, picks one at random as the gold reply,
//! and records the whole set on the turn.

use rand::seq::SliceRandom;
use rand::Rng;

use super::dialog::{AnnotatedDialog, Line, Mode, Turn};
use super::goal::{Goal, Slot};
use super::kb::Kb;
use super::patterns::{fill, Patterns};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SystemAct {
    Greet,
    OnIt,
    Ask(Slot),
    Looking,
    /// Arguments in [`Slot::ALL`] order.
    ApiCall([String; 4]),
    UpdateMore,
    Propose(usize),
    OtherOption,
    Reserve,
    GivePhone(usize),
    GiveAddress(usize),
    AnythingElse,
    Welcome,
}

impl SystemAct {
    pub fn render(&self, patterns: &Patterns, kb: &Kb) -> String {
        match self {
            SystemAct::Greet => patterns.system("greet").to_string(),
            SystemAct::OnIt => patterns.system("on_it").to_string(),
            SystemAct::Ask(slot) => patterns.system(&format!("ask_{}", slot.name())).to_string(),
            SystemAct::Looking => patterns.system("looking").to_string(),
            SystemAct::ApiCall(v) => fill(
                patterns.system("api_call"),
                &[
                    ("cuisine", &v[0]),
                    ("location", &v[1]),
                    ("people", &v[2]),
                    ("price", &v[3]),
                ],
            ),
            SystemAct::UpdateMore => patterns.system("update_more").to_string(),
            SystemAct::Propose(r) => fill(
                patterns.system("propose"),
                &[("restaurant", &kb.restaurant(*r).name)],
            ),
            SystemAct::OtherOption => patterns.system("other_option").to_string(),
            SystemAct::Reserve => patterns.system("reserve").to_string(),
            SystemAct::GivePhone(r) => {
                fill(patterns.system("give_phone"), &[("phone", &kb.restaurant(*r).phone)])
            }
            SystemAct::GiveAddress(r) => fill(
                patterns.system("give_address"),
                &[("address", &kb.restaurant(*r).address)],
            ),
            SystemAct::AnythingElse => patterns.system("anything_else").to_string(),
            SystemAct::Welcome => patterns.system("welcome").to_string(),
        }
    }
}

/// What the system is expected to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Greet,
    Acknowledge,
    Collect,
    ApiCall,
    UpdateAck,
    Relook,
    Propose,
    OtherOption,
    Reserve,
    GivePhone,
    GiveAddress,
    AnythingElse,
    Welcome,
    Done,
}

/// Simulator state just before a system turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogState {
    pub mode: Mode,
    pub phase: Phase,
    /// Slot values the user has stated so far, by [`Slot::index`].
    pub known: [Option<String>; 4],
    /// Restaurants returned by the latest api call.
    pub results: Vec<usize>,
    pub proposed: Vec<usize>,
    pub accepted: Option<usize>,
}

impl DialogState {
    pub fn new(mode: Mode) -> Self {
        DialogState {
            mode,
            phase: Phase::Greet,
            known: Default::default(),
            results: Vec::new(),
            proposed: Vec::new(),
            accepted: None,
        }
    }

    pub fn missing(&self) -> Vec<Slot> {
        Slot::ALL
            .into_iter()
            .filter(|s| self.known[s.index()].is_none())
            .collect()
    }
}

/// Every act the simulator could emit from `state`.
pub fn enumerate_valid_next(state: &DialogState, kb: &Kb) -> Result<Vec<SystemAct>> {
    let unreachable = |what: &str| Err(Error::Contract(format!("unreachable state: {what}")));
    let acts = match state.phase {
        Phase::Greet => vec![SystemAct::Greet],
        Phase::Acknowledge => vec![SystemAct::OnIt],
        Phase::Collect => {
            let missing = state.missing();
            match (missing.first(), state.mode) {
                (None, _) => vec![SystemAct::Looking],
                (Some(&first), Mode::Original) => vec![SystemAct::Ask(first)],
                (Some(_), Mode::Permuted) => missing.into_iter().map(SystemAct::Ask).collect(),
            }
        }
        Phase::ApiCall => {
            let Some(values) = state.known.iter().cloned().collect::<Option<Vec<_>>>() else {
                return unreachable("api call with missing slots");
            };
            vec![SystemAct::ApiCall(values.try_into().expect("four slots"))]
        }
        Phase::UpdateAck => vec![SystemAct::UpdateMore],
        Phase::Relook => vec![SystemAct::Looking],
        Phase::Propose => {
            let remaining: Vec<usize> = state
                .results
                .iter()
                .copied()
                .filter(|r| !state.proposed.contains(r))
                .collect();
            let Some(best) = remaining.iter().map(|&r| kb.restaurant(r).rating).max() else {
                return unreachable("no restaurant left to propose");
            };
            let mut tied: Vec<usize> = remaining
                .into_iter()
                .filter(|&r| kb.restaurant(r).rating == best)
                .collect();
            tied.sort_unstable();
            tied.into_iter().map(SystemAct::Propose).collect()
        }
        Phase::OtherOption => vec![SystemAct::OtherOption],
        Phase::Reserve => vec![SystemAct::Reserve],
        Phase::GivePhone | Phase::GiveAddress => {
            let Some(r) = state.accepted else {
                return unreachable("information request before a booking");
            };
            if state.phase == Phase::GivePhone {
                vec![SystemAct::GivePhone(r)]
            } else {
                vec![SystemAct::GiveAddress(r)]
            }
        }
        Phase::AnythingElse => vec![SystemAct::AnythingElse],
        Phase::Welcome => vec![SystemAct::Welcome],
        Phase::Done => return unreachable("dialog already finished"),
    };
    Ok(acts)
}

/// Rendered answer set for `state`, deduplicated and sorted.
pub fn valid_utterances(state: &DialogState, kb: &Kb, patterns: &Patterns) -> Result<Vec<String>> {
    let mut out: Vec<String> = enumerate_valid_next(state, kb)?
        .iter()
        .map(|a| a.render(patterns, kb))
        .collect();
    out.sort();
    out.dedup();
    Ok(out)
}

struct Run<'a, R: Rng + ?Sized> {
    kb: &'a Kb,
    patterns: &'a Patterns,
    rng: &'a mut R,
    state: DialogState,
    lines: Vec<Line>,
}

impl<R: Rng + ?Sized> Run<'_, R> {
    fn user(&mut self, key: &str, vars: &[(&str, &str)]) -> String {
        let template = self.patterns.pick_user(key, self.rng).to_string();
        fill(&template, vars)
    }

    fn respond(&mut self, user: String, phase: Phase) -> Result<SystemAct> {
        self.state.phase = phase;
        let acts = enumerate_valid_next(&self.state, self.kb)?;
        let gold = acts.choose(self.rng).expect("nonempty answer set").clone();
        let gold_text = gold.render(self.patterns, self.kb);
        let mut others: Vec<String> = acts
            .iter()
            .map(|a| a.render(self.patterns, self.kb))
            .filter(|t| *t != gold_text)
            .collect();
        others.sort();
        others.dedup();
        let mut answers = vec![gold_text];
        answers.extend(others);
        self.lines.push(Line::Exchange(Turn { user, answers }));
        Ok(gold)
    }
}

fn slot_value_check(goal: &Goal, kb: &Kb) -> Result<()> {
    for slot in Slot::ALL {
        if !slot.values(kb).iter().any(|v| v == goal.value(slot)) {
            return Err(Error::Generation(format!(
                "goal {slot} `{}` is not in the KB",
                goal.value(slot)
            )));
        }
    }
    if let Some((slot, v)) = &goal.update {
        if !slot.values(kb).contains(v) {
            return Err(Error::Generation(format!("update {slot} `{v}` is not in the KB")));
        }
    }
    Ok(())
}

/// Plays one full reservation dialog for `goal`.
pub fn simulate_dialog<R: Rng + ?Sized>(
    goal: &Goal,
    kb: &Kb,
    mode: Mode,
    patterns: &Patterns,
    rng: &mut R,
) -> Result<AnnotatedDialog> {
    slot_value_check(goal, kb)?;
    let mut run = Run {
        kb,
        patterns,
        rng,
        state: DialogState::new(mode),
        lines: Vec::new(),
    };

    let greeting = run.user("greet", &[]);
    run.respond(greeting, Phase::Greet)?;

    let mut phrases = String::new();
    for slot in &goal.initially_given {
        let phrase = run.user(&format!("slot_{}", slot.name()), &[(slot.name(), goal.value(*slot))]);
        phrases.push(' ');
        phrases.push_str(&phrase);
        run.state.known[slot.index()] = Some(goal.value(*slot).to_string());
    }
    let request = run.user("request", &[("slots", &phrases)]);
    run.respond(request, Phase::Acknowledge)?;

    let mut utterance = run.user("silence", &[]);
    loop {
        match run.respond(utterance, Phase::Collect)? {
            SystemAct::Ask(slot) => {
                run.state.known[slot.index()] = Some(goal.value(slot).to_string());
                utterance = run.user(&format!("answer_{}", slot.name()), &[(slot.name(), goal.value(slot))]);
            }
            SystemAct::Looking => break,
            other => return Err(Error::Contract(format!("unexpected act {other:?}"))),
        }
    }
    let silence = run.user("silence", &[]);
    run.respond(silence, Phase::ApiCall)?;

    if let Some((slot, value)) = &goal.update {
        run.state.known[slot.index()] = Some(value.clone());
        let update = run.user(&format!("update_{}", slot.name()), &[(slot.name(), value)]);
        run.respond(update, Phase::UpdateAck)?;
        let no = run.user("no_update", &[]);
        run.respond(no, Phase::Relook)?;
        let silence = run.user("silence", &[]);
        run.respond(silence, Phase::ApiCall)?;
    }

    let known = |s: Slot| run.state.known[s.index()].clone().expect("collected");
    let mut results = kb
        .query(&known(Slot::Cuisine), &known(Slot::Location), &known(Slot::Price))?
        .to_vec();
    results.shuffle(run.rng);
    for &r in &results {
        run.lines.extend(kb.restaurant(r).facts().map(Line::Fact));
    }
    run.state.results = results;

    let mut rejections = run.rng.gen_range(0..run.state.results.len());
    let mut utterance = run.user("silence", &[]);
    loop {
        let SystemAct::Propose(r) = run.respond(utterance, Phase::Propose)? else {
            return Err(Error::Contract("expected a proposal".into()));
        };
        run.state.proposed.push(r);
        if rejections > 0 {
            rejections -= 1;
            let reject = run.user("reject", &[]);
            run.respond(reject, Phase::OtherOption)?;
            utterance = run.user("silence", &[]);
        } else {
            run.state.accepted = Some(r);
            let accept = run.user("accept", &[]);
            run.respond(accept, Phase::Reserve)?;
            break;
        }
    }

    let mut requests = vec![(Phase::GivePhone, "ask_phone"), (Phase::GiveAddress, "ask_address")];
    requests.shuffle(run.rng);
    let n_requests = run.rng.gen_range(0..=2);
    for (phase, key) in requests.into_iter().take(n_requests) {
        let ask = run.user(key, &[]);
        run.respond(ask, phase)?;
    }
    let thanks = run.user("thanks", &[]);
    run.respond(thanks, Phase::AnythingElse)?;
    let bye = run.user("goodbye", &[]);
    run.respond(bye, Phase::Welcome)?;

    Ok(AnnotatedDialog { lines: run.lines })
}
