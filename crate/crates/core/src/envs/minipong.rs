//! MiniPong: a small grid Pong with a rule-based opponent.
//!
//! The ball lives in columns `1..width-1`; the opponent's paddle occupies
//! column 0 and the agent's the last column. Each step, both paddles move
//! (the agent by its action, the opponent one cell toward where the ball
//! was at the start of the step, skipping the move with a fixed failure
//! probability), then the ball advances one cell diagonally or
//! horizontally, bouncing off the top and bottom walls.
//!
//! A ball reaching a paddle column is returned if the paddle covers its
//! row; the row offset from the paddle's centre sets the new vertical
//! velocity. Otherwise the other side scores: reward +1 when the opponent
//! misses, −1 when the agent does, and the ball is served again from the
//! centre column.
//!
//! A game ends once either side reaches `points_to_win`. The score then
//! resets but play continues on the same chain: game boundaries do not
//! truncate returns.

use serde::{Deserialize, Serialize};

use super::{EnvError, Environment, Step};
use crate::coding::{GridLayout, ObservationShape, Symbol};
use crate::rng::Rng;
use rand::Rng as _;

pub const NOOP: usize = 0;
pub const UP: usize = 1;
pub const DOWN: usize = 2;

/// Cell codes of the grid view.
pub const EMPTY: Symbol = 0;
pub const AGENT: Symbol = 1;
pub const OPPONENT: Symbol = 2;
/// Ball cells are `BALL + 3 * (vx > 0) + (vy + 1)`.
pub const BALL: Symbol = 3;
pub const CELL_ALPHABET: usize = 9;

const REWARDS: [f64; 3] = [-1.0, 0.0, 1.0];

fn default_width() -> usize {
    16
}
fn default_height() -> usize {
    16
}
fn default_paddle() -> usize {
    3
}
fn default_failure() -> f64 {
    0.1
}
fn default_points() -> u32 {
    21
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiniPongConfig {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_height")]
    pub height: usize,
    #[serde(default = "default_paddle")]
    pub paddle: usize,
    /// Probability that the opponent skips its move on a step.
    #[serde(default = "default_failure")]
    pub opponent_failure: f64,
    #[serde(default = "default_points")]
    pub points_to_win: u32,
}

impl Default for MiniPongConfig {
    fn default() -> Self {
        Self {
            width: default_width(),
            height: default_height(),
            paddle: default_paddle(),
            opponent_failure: default_failure(),
            points_to_win: default_points(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ball {
    x: usize,
    y: usize,
    vx: i8,
    vy: i8,
}

#[derive(Debug, Clone)]
pub struct MiniPong {
    config: MiniPongConfig,
    ball: Ball,
    agent: usize,
    opponent: usize,
    agent_points: u32,
    opponent_points: u32,
}

impl MiniPong {
    pub fn new(config: MiniPongConfig, rng: &mut Rng) -> Result<Self, EnvError> {
        let MiniPongConfig {
            width,
            height,
            paddle,
            opponent_failure,
            points_to_win,
        } = config;
        if width < 8 || height < 8 {
            return Err(EnvError::InvalidParameters(format!(
                "MiniPong needs at least an 8x8 grid, got {width}x{height}"
            )));
        }
        if paddle == 0 || paddle > height / 2 {
            return Err(EnvError::InvalidParameters(format!("paddle length {paddle} does not fit height {height}")));
        }
        if !(0.0..=1.0).contains(&opponent_failure) || points_to_win == 0 {
            return Err(EnvError::InvalidParameters("invalid opponent failure rate or points to win".into()));
        }
        let centre = (height - paddle) / 2;
        let mut env = Self {
            config,
            ball: Ball { x: 0, y: 0, vx: 1, vy: 0 },
            agent: centre,
            opponent: centre,
            agent_points: 0,
            opponent_points: 0,
        };
        env.serve(rng);
        Ok(env)
    }

    pub fn config(&self) -> &MiniPongConfig {
        &self.config
    }

    /// Agent points minus opponent points in the current game.
    pub fn score(&self) -> i64 {
        self.agent_points as i64 - self.opponent_points as i64
    }

    fn serve_column(&self) -> usize {
        self.config.width / 2
    }

    /// Fewest steps between two consecutive points.
    pub fn min_point_gap(&self) -> usize {
        let cx = self.serve_column();
        cx.min(self.config.width - 1 - cx)
    }

    fn serve(&mut self, rng: &mut Rng) {
        let h = self.config.height;
        self.ball = Ball {
            x: self.serve_column(),
            y: rng.random_range(h / 4..h - h / 4),
            vx: if rng.random_bool(0.5) { 1 } else { -1 },
            vy: rng.random_range(-1..=1),
        };
    }

    fn covers(top: usize, paddle: usize, y: usize) -> bool {
        (top..top + paddle).contains(&y)
    }

    fn move_paddle(top: usize, delta: isize, max_top: usize) -> usize {
        (top as isize + delta).clamp(0, max_top as isize) as usize
    }

    /// Ball position and velocity: `(x, y, vx, vy)`.
    pub fn ball(&self) -> (usize, usize, i8, i8) {
        (self.ball.x, self.ball.y, self.ball.vx, self.ball.vy)
    }

    /// Top rows of the agent and opponent paddles.
    pub fn paddles(&self) -> (usize, usize) {
        (self.agent, self.opponent)
    }

    /// Places the ball and paddles directly; for tests and demos.
    pub fn set_positions(&mut self, ball: (usize, usize, i8, i8), agent: usize, opponent: usize) -> Result<(), EnvError> {
        let (w, h, l) = (self.config.width, self.config.height, self.config.paddle);
        let (x, y, vx, vy) = ball;
        if !(1..w - 1).contains(&x) || y >= h || vx.abs() != 1 || vy.abs() > 1 || agent > h - l || opponent > h - l {
            return Err(EnvError::InvalidParameters("position outside the board".into()));
        }
        self.ball = Ball { x, y, vx, vy };
        self.agent = agent;
        self.opponent = opponent;
        Ok(())
    }

    /// ASCII picture of the board.
    pub fn render(&self) -> String {
        let mut cells = Vec::new();
        self.observe(&mut cells);
        let w = self.config.width;
        cells
            .chunks(w)
            .map(|row| {
                row.iter()
                    .map(|&c| match c {
                        EMPTY => '.',
                        AGENT => ']',
                        OPPONENT => '[',
                        _ => 'o',
                    })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Environment for MiniPong {
    fn num_actions(&self) -> usize {
        3
    }

    fn rewards(&self) -> &[f64] {
        &REWARDS
    }

    /// Ball column, row and velocity times both paddle positions.
    fn num_states(&self) -> usize {
        let (w, h, l) = (self.config.width, self.config.height, self.config.paddle);
        (w - 2) * h * 2 * 3 * (h - l + 1) * (h - l + 1)
    }

    fn state(&self) -> usize {
        let (w, h, l) = (self.config.width, self.config.height, self.config.paddle);
        let tops = h - l + 1;
        let b = &self.ball;
        let mut i = b.x - 1;
        i = i * h + b.y;
        i = i * 2 + (b.vx > 0) as usize;
        i = i * 3 + (b.vy + 1) as usize;
        i = i * tops + self.agent;
        i = i * tops + self.opponent;
        debug_assert!(i < (w - 2) * h * 6 * tops * tops);
        i
    }

    fn shape(&self) -> ObservationShape {
        ObservationShape::Grid(
            GridLayout::new(self.config.width, self.config.height, CELL_ALPHABET).expect("validated dimensions"),
        )
    }

    fn observe(&self, out: &mut Vec<Symbol>) {
        let (w, h, l) = (self.config.width, self.config.height, self.config.paddle);
        out.clear();
        out.resize(w * h, EMPTY);
        for y in 0..l {
            out[(self.opponent + y) * w] = OPPONENT;
            out[(self.agent + y) * w + w - 1] = AGENT;
        }
        let b = &self.ball;
        out[b.y * w + b.x] = BALL + 3 * (b.vx > 0) as usize + (b.vy + 1) as usize;
    }

    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<Step, EnvError> {
        let (w, h, l) = (self.config.width, self.config.height, self.config.paddle);
        let max_top = h - l;
        let delta = match action {
            NOOP => 0,
            UP => -1,
            DOWN => 1,
            _ => return Err(EnvError::InvalidAction { action, actions: 3 }),
        };
        self.agent = Self::move_paddle(self.agent, delta, max_top);
        if !rng.random_bool(self.config.opponent_failure) {
            let centre = self.opponent + l / 2;
            let toward = (self.ball.y as isize - centre as isize).signum();
            self.opponent = Self::move_paddle(self.opponent, toward, max_top);
        }

        let mut ny = self.ball.y as isize + self.ball.vy as isize;
        let mut vy = self.ball.vy;
        if ny < 0 || ny >= h as isize {
            vy = -vy;
            ny += 2 * vy as isize;
        }
        let ny = ny as usize;
        let nx = self.ball.x as isize + self.ball.vx as isize;

        let mut reward = 0.0;
        if nx == 0 || nx == w as isize - 1 {
            let (top, scored_by_agent) = if nx == 0 { (self.opponent, true) } else { (self.agent, false) };
            if Self::covers(top, l, ny) {
                let offset = ny as isize - (top + l / 2) as isize;
                self.ball = Ball {
                    x: (nx - 2 * self.ball.vx as isize) as usize,
                    y: ny,
                    vx: -self.ball.vx,
                    vy: offset.clamp(-1, 1) as i8,
                };
            } else {
                if scored_by_agent {
                    self.agent_points += 1;
                    reward = 1.0;
                } else {
                    self.opponent_points += 1;
                    reward = -1.0;
                }
                self.serve(rng);
            }
        } else {
            self.ball = Ball {
                x: nx as usize,
                y: ny,
                vx: self.ball.vx,
                vy,
            };
        }

        let episode_end = self.agent_points >= self.config.points_to_win || self.opponent_points >= self.config.points_to_win;
        if episode_end {
            self.agent_points = 0;
            self.opponent_points = 0;
        }
        Ok(Step { reward, episode_end })
    }

    /// New game: scores cleared, paddles centred, ball served.
    fn reset(&mut self, rng: &mut Rng) {
        let centre = (self.config.height - self.config.paddle) / 2;
        self.agent = centre;
        self.opponent = centre;
        self.agent_points = 0;
        self.opponent_points = 0;
        self.serve(rng);
    }

    /// At most one point per [`min_point_gap`](Self::min_point_gap)
    /// steps, so an m-step return is an integer of magnitude at most
    /// `ceil(m / gap)`.
    fn return_alphabet(&self, m: usize) -> Vec<f64> {
        let k = m.div_ceil(self.min_point_gap()).min(m) as i64;
        (-k..=k).map(|z| z as f64).collect()
    }
}
