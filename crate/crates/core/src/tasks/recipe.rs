//! Two-player recipe layout game.
//!
//! Each player owns one recipe block on the shared area and must find the matching image in
//! their side columns (or conjure it by voice), move it to the front, place it, and drag it
//! into the block's placeholder.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::content::ContentProvider;
use crate::interaction::{
    ColumnRef, Placeholder, Prompt, PromptTone, Rect, TextBlock, WallEvent, WallModel, WallState,
};
use crate::protocol::{HubEvent, PromptMsg};
use crate::registry::{SessionId, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameMode {
    /// The answer image hides in one of the player's side columns.
    PrePopulated,
    /// The answer image is only reachable through a voice query.
    VoiceRequired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Searching,
    Refining,
    Placing,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeCard {
    pub title: String,
    pub body: String,
    pub answer_tags: BTreeSet<String>,
}

impl RecipeCard {
    pub fn new(title: &str, body: &str, answers: &[&str]) -> Self {
        Self {
            title: title.to_string(),
            body: body.to_string(),
            answer_tags: answers.iter().map(|a| a.to_string()).collect(),
        }
    }
}

pub fn builtin_recipes() -> Vec<RecipeCard> {
    vec![
        RecipeCard::new("Guacamole", "Mash the flesh with lime, salt, onion and cilantro.", &["avocado"]),
        RecipeCard::new("Lemonade", "Squeeze the juice, stir in sugar and top up with cold water.", &["lemon"]),
        RecipeCard::new("Caprese salad", "Slice and layer with mozzarella, basil and olive oil.", &["tomato"]),
        RecipeCard::new("Pesto", "Pound the leaves with garlic, pine nuts, parmesan and oil.", &["basil"]),
        RecipeCard::new(
            "Strawberry shortcake",
            "Macerate the berries in sugar and pile them onto split biscuits with cream.",
            &["strawberry"],
        ),
        RecipeCard::new("Banana bread", "Fold the mashed fruit into a butter and sugar batter and bake.", &["banana"]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeBlock {
    pub block_id: String,
    pub side: Side,
    pub recipe: RecipeCard,
    pub target_rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub mode: GameMode,
    pub abandon_ms: u64,
    /// Candidate recipes; two are drawn per game.
    pub recipes: Vec<RecipeCard>,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self { mode: GameMode::PrePopulated, abandon_ms: 600_000, recipes: builtin_recipes() }
    }
}

/// Final result of one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameOutcome {
    pub game_id: String,
    pub mode: GameMode,
    pub completed: bool,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
}

impl GameOutcome {
    pub fn duration_ms(&self) -> Option<u64> {
        match (self.started_at, self.finished_at, self.completed) {
            (Some(s), Some(f), true) => Some(f.saturating_sub(s)),
            _ => None,
        }
    }
}

/// Phase changes and verdicts for the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GameRecord {
    Started { game_id: String, at: u64 },
    Phase { side: Side, session_id: SessionId, phase: Phase, at: u64 },
    Verdict { side: Side, session_id: SessionId, image_id: String, correct: bool, at: u64 },
    Finished { outcome: GameOutcome },
}

#[derive(Debug, Clone)]
pub struct RecipeGame {
    pub game_id: String,
    pub mode: GameMode,
    pub blocks: Vec<RecipeBlock>,
    abandon_ms: u64,
    phases: BTreeMap<Side, Phase>,
    sessions: BTreeMap<Side, SessionId>,
    started_at: Option<u64>,
    finished_at: Option<u64>,
    abandoned: bool,
    records: Vec<GameRecord>,
}

pub fn game_prompt_id(side: Side) -> String {
    format!("game:{side}")
}

/// Text block and placeholder rectangles for the two halves of the shared area.
pub fn block_layout(model: &WallModel) -> [(Rect, Rect); 2] {
    let r = model.shared_rect();
    let half = (r.u1 - r.u0) / 2.0;
    let h = model.room.px_h as f64;
    let target = model.cfg.card_px + 100.0;
    [0.0, 1.0].map(|i| {
        let cu = r.u0 + half * (i + 0.5);
        (
            Rect::centered(cu, h * 0.2, half * 0.8, h * 0.25),
            Rect::centered(cu, h * 0.65, target, target),
        )
    })
}

impl RecipeGame {
    /// Draws two recipes and lays out the starting wall for the chosen mode.
    pub fn prepare(
        game_id: &str,
        cfg: &GameConfig,
        seed: u64,
        model: &WallModel,
        provider: &ContentProvider,
    ) -> Result<(RecipeGame, WallState), TaskError> {
        if cfg.recipes.len() < 2 {
            return Err(TaskError::NotEnoughRecipes(cfg.recipes.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = cfg.recipes.clone();
        pool.shuffle(&mut rng);
        let layout = block_layout(model);
        let blocks: Vec<RecipeBlock> = [Side::Left, Side::Right]
            .into_iter()
            .zip(pool)
            .zip(layout)
            .map(|((side, recipe), (_, target_rect))| RecipeBlock {
                block_id: format!("recipe-{side}"),
                side,
                recipe,
                target_rect,
            })
            .collect();

        let all_answers: BTreeSet<String> =
            blocks.iter().flat_map(|b| b.recipe.answer_tags.iter().cloned()).collect();
        let fillers = provider.filtered(|e| e.tags.is_disjoint(&all_answers));
        let mut state = WallState::default();
        for side in [Side::Left, Side::Right] {
            for index in 0..model.room.columns_per_side {
                let col_seed = rng.random::<u64>();
                let cards = fillers
                    .random_fill(model.cfg.cards_per_column as usize, col_seed)?
                    .into_iter()
                    .enumerate()
                    .map(|(i, mut c)| {
                        c.image_id = format!("{game_id}-{side}{index}-{i}");
                        c
                    })
                    .collect();
                state.columns.push(crate::interaction::ColumnState {
                    side,
                    index,
                    cards,
                    scroll_offset: 0,
                    populated_query: None,
                });
            }
        }

        for (block, (text_rect, _)) in blocks.iter().zip(layout) {
            state.shared.text_blocks.push(TextBlock {
                block_id: block.block_id.clone(),
                rect: text_rect,
                title: block.recipe.title.clone(),
                body: block.recipe.body.clone(),
            });
            state.shared.placeholders.push(Placeholder {
                block_id: block.block_id.clone(),
                target_rect: block.target_rect,
            });
        }

        if cfg.mode == GameMode::PrePopulated {
            for block in &blocks {
                let answers = &block.recipe.answer_tags;
                let mut card = provider
                    .filtered(|e| !e.tags.is_disjoint(answers))
                    .random_fill(1, rng.random())
                    .map_err(|_| TaskError::MissingAnswer(answers.iter().cloned().collect::<Vec<_>>().join(",")))?
                    .remove(0);
                card.image_id = format!("{game_id}-answer-{}", block.side);
                let index = rng.random_range(0..model.room.columns_per_side);
                let col = state.column_mut(ColumnRef::new(block.side, index)).expect("column exists");
                let at = rng.random_range(0..=col.cards.len());
                col.cards.insert(at, card);
            }
        }

        let game = RecipeGame {
            game_id: game_id.to_string(),
            mode: cfg.mode,
            blocks,
            abandon_ms: cfg.abandon_ms,
            phases: [(Side::Left, Phase::Searching), (Side::Right, Phase::Searching)].into(),
            sessions: BTreeMap::new(),
            started_at: None,
            finished_at: None,
            abandoned: false,
            records: Vec::new(),
        };
        Ok((game, state))
    }

    pub fn block(&self, side: Side) -> &RecipeBlock {
        self.blocks.iter().find(|b| b.side == side).expect("one block per side")
    }

    pub fn phase(&self, side: Side) -> Phase {
        self.phases[&side]
    }

    pub fn is_done(&self) -> bool {
        self.phases.values().all(|p| *p == Phase::Done)
    }

    pub fn is_over(&self) -> bool {
        self.finished_at.is_some()
    }

    pub fn outcome(&self) -> GameOutcome {
        GameOutcome {
            game_id: self.game_id.clone(),
            mode: self.mode,
            completed: self.is_done() && !self.abandoned,
            started_at: self.started_at,
            finished_at: self.finished_at,
        }
    }

    pub fn drain_records(&mut self) -> Vec<GameRecord> {
        std::mem::take(&mut self.records)
    }

    fn prompt(&self, side: Side, text: String, tone: PromptTone) -> PromptMsg {
        let pid = game_prompt_id(side);
        PromptMsg {
            prompt_id: pid.clone(),
            prompt: Some(Prompt {
                prompt_id: pid,
                session_id: self.sessions.get(&side).cloned(),
                text,
                tone,
                target: None,
                task: None,
                task_id: None,
            }),
        }
    }

    fn advance(&mut self, side: Side, phase: Phase, at: u64) -> bool {
        let cur = self.phases.get_mut(&side).expect("side");
        if phase <= *cur {
            return false;
        }
        *cur = phase;
        let session_id = self.sessions[&side].clone();
        self.records.push(GameRecord::Phase { side, session_id, phase, at });
        true
    }

    fn finish(&mut self, at: u64) {
        self.finished_at = Some(at);
        self.records.push(GameRecord::Finished { outcome: self.outcome() });
    }

    /// Feeds one hub event; `state` is the hub state after it.
    pub fn on_event(&mut self, ev: &HubEvent, state: &WallState) -> Vec<PromptMsg> {
        if self.is_over() {
            return Vec::new();
        }
        let at = ev.at;
        if let WallEvent::SessionRegistered { session_id, side } = &ev.event {
            self.sessions.insert(*side, session_id.clone());
            if self.sessions.len() == 2 && self.started_at.is_none() {
                self.started_at = Some(at);
                self.records.push(GameRecord::Started { game_id: self.game_id.clone(), at });
            }
            let text = format!("Find a picture for the {} recipe", self.block(*side).recipe.title);
            return vec![self.prompt(*side, text, PromptTone::Task)];
        }
        let sid = ev.event.session_id();
        let Some(side) = self.sessions.iter().find(|(_, s)| *s == sid).map(|(side, _)| *side) else {
            return Vec::new();
        };
        let answers = self.block(side).recipe.answer_tags.clone();
        let target_rect = self.block(side).target_rect;
        let mut out = Vec::new();
        match &ev.event {
            WallEvent::MovedToFront { .. } => {
                self.advance(side, Phase::Refining, at);
            }
            WallEvent::Placed { image_id, tags, .. } => {
                let correct = tags.iter().any(|t| answers.contains(t));
                self.records.push(GameRecord::Verdict {
                    side,
                    session_id: sid.clone(),
                    image_id: image_id.clone(),
                    correct,
                    at,
                });
                if correct {
                    self.advance(side, Phase::Placing, at);
                    out.push(self.prompt(side, "Correct! Now drag it into the empty frame".into(), PromptTone::Correct));
                } else {
                    out.push(self.prompt(side, "That is not the right picture, try another".into(), PromptTone::Incorrect));
                }
            }
            WallEvent::DragEnded { image_id, u, v, .. } => {
                let correct = state
                    .shared
                    .placed
                    .iter()
                    .find(|p| &p.card.image_id == image_id)
                    .is_some_and(|p| !p.card.tags.is_disjoint(&answers));
                if correct && target_rect.contains(*u, *v) && self.advance(side, Phase::Done, at) {
                    out.push(self.prompt(side, "Done, well placed".into(), PromptTone::Done));
                    if self.is_done() {
                        self.finish(at);
                    }
                }
            }
            _ => {}
        }
        out
    }

    /// Gives up on a game that has run past the abandon timeout.
    pub fn poll(&mut self, now: u64) -> bool {
        match self.started_at {
            Some(s) if !self.is_over() && now.saturating_sub(s) >= self.abandon_ms => {
                self.abandoned = true;
                self.finish(now);
                true
            }
            _ => false,
        }
    }

    /// Ends an unfinished game as abandoned.
    pub fn close(&mut self, now: u64) {
        if !self.is_over() {
            self.abandoned = true;
            self.finish(now);
        }
    }
}
