//! Simplified Blackjack with an infinite deck.
//!
//! The state is the dealer's showing card, the player's sum (12..=21) and
//! whether the player holds a usable ace: 200 states. Sums below 12 are
//! hit automatically during the deal, since hitting them can never bust.
//! The dealer draws to 17 or more and stands on soft 17. A two-card 21
//! gets no special payout.
//!
//! Every step that continues the hand pays 0; the step that ends it pays
//! the outcome (−1, 0 or +1). The environment then deals a new hand.

use std::collections::HashMap;

use super::{EnvError, Environment, ExplicitMdp, Step, TabularPolicy, Transition};
use crate::rng::Rng;
use rand::Rng as _;

pub const HIT: usize = 0;
pub const STAY: usize = 1;

pub const NUM_STATES: usize = 200;
/// Index of the absorbing end-of-hand state in [`Blackjack::exact_mdp`].
pub const TERMINAL: usize = NUM_STATES;

const REWARDS: [f64; 3] = [-1.0, 0.0, 1.0];
const LOSS: usize = 0;
const DRAW: usize = 1;
const WIN: usize = 2;

/// Probability of drawing card value `c` (1 = ace, 10 covers the face
/// cards).
fn card_prob(c: u8) -> f64 {
    if c == 10 {
        4.0 / 13.0
    } else {
        1.0 / 13.0
    }
}

fn draw(rng: &mut Rng) -> u8 {
    rng.random_range(1..=13u8).min(10)
}

/// A hand as its best total and whether an ace currently counts as 11.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Hand {
    total: u8,
    soft: bool,
}

impl Hand {
    const EMPTY: Hand = Hand { total: 0, soft: false };

    fn add(self, card: u8) -> Hand {
        if self.soft {
            let total = self.total + card;
            if total > 21 {
                Hand { total: total - 10, soft: false }
            } else {
                Hand { total, soft: true }
            }
        } else if card == 1 && self.total + 11 <= 21 {
            Hand { total: self.total + 11, soft: true }
        } else {
            Hand { total: self.total + card, soft: false }
        }
    }

    fn bust(self) -> bool {
        self.total > 21
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlackjackState {
    /// Dealer's showing card, 1..=10.
    pub dealer: u8,
    /// Player's total, 12..=21.
    pub player: u8,
    pub usable_ace: bool,
}

impl BlackjackState {
    pub fn index(&self) -> usize {
        (self.dealer as usize - 1) * 20 + (self.player as usize - 12) * 2 + self.usable_ace as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < NUM_STATES).then(|| Self {
            dealer: (i / 20) as u8 + 1,
            player: ((i % 20) / 2) as u8 + 12,
            usable_ace: i % 2 == 1,
        })
    }

    fn hand(&self) -> Hand {
        Hand {
            total: self.player,
            soft: self.usable_ace,
        }
    }

    fn with_hand(&self, hand: Hand) -> Self {
        Self {
            player: hand.total,
            usable_ace: hand.soft,
            ..*self
        }
    }
}

/// Final dealer totals 17..=21 (indices 0..5) and bust (index 5).
fn dealer_final_distribution(showing: u8) -> [f64; 6] {
    fn play(hand: Hand, p: f64, out: &mut [f64; 6]) {
        if hand.bust() {
            out[5] += p;
        } else if hand.total >= 17 {
            out[(hand.total - 17) as usize] += p;
        } else {
            for c in 1..=10 {
                play(hand.add(c), p * card_prob(c), out);
            }
        }
    }
    let mut out = [0.0; 6];
    let first = Hand::EMPTY.add(showing);
    for c in 1..=10 {
        play(first.add(c), card_prob(c), &mut out);
    }
    out
}

fn settle(player: u8, dealer: Hand) -> usize {
    if dealer.bust() || player > dealer.total {
        WIN
    } else if player == dealer.total {
        DRAW
    } else {
        LOSS
    }
}

/// Blackjack as a continuing stream of hands.
#[derive(Debug, Clone)]
pub struct Blackjack {
    state: BlackjackState,
}

impl Blackjack {
    pub fn new(rng: &mut Rng) -> Self {
        Self {
            state: Self::deal(rng),
        }
    }

    pub fn current(&self) -> BlackjackState {
        self.state
    }

    /// Starts the hand in a chosen state.
    pub fn set_state(&mut self, state: BlackjackState) {
        self.state = state;
    }

    fn deal(rng: &mut Rng) -> BlackjackState {
        let mut hand = Hand::EMPTY.add(draw(rng)).add(draw(rng));
        while hand.total < 12 {
            hand = hand.add(draw(rng));
        }
        BlackjackState {
            dealer: draw(rng),
            player: hand.total,
            usable_ace: hand.soft,
        }
    }

    /// Stays on 20 and 21, hits otherwise.
    pub fn target_policy() -> TabularPolicy {
        let choice: Vec<usize> = (0..NUM_STATES)
            .map(|i| {
                let s = BlackjackState::from_index(i).expect("in range");
                if s.player >= 20 {
                    STAY
                } else {
                    HIT
                }
            })
            .collect();
        TabularPolicy::deterministic(&choice, 2).expect("valid actions")
    }

    /// Exact probability of each state at the start of a hand.
    pub fn start_distribution() -> Vec<f64> {
        fn deal(hand: Hand, cards: u8, p: f64, out: &mut HashMap<Hand, f64>) {
            if cards >= 2 && hand.total >= 12 {
                *out.entry(hand).or_default() += p;
                return;
            }
            for c in 1..=10 {
                deal(hand.add(c), cards + 1, p * card_prob(c), out);
            }
        }
        let mut hands = HashMap::new();
        deal(Hand::EMPTY, 0, 1.0, &mut hands);
        let mut dist = vec![0.0; NUM_STATES];
        for (hand, p) in hands {
            for d in 1..=10 {
                let s = BlackjackState {
                    dealer: d,
                    player: hand.total,
                    usable_ace: hand.soft,
                };
                dist[s.index()] += p * card_prob(d);
            }
        }
        dist
    }

    /// The exact kernel: the 200 states plus an absorbing [`TERMINAL`]
    /// state that every hand ends in, paying 0 forever after. `policy`
    /// covers the 200 playing states; the terminal state stays.
    pub fn exact_mdp(policy: &TabularPolicy) -> Result<ExplicitMdp, EnvError> {
        if policy.num_states() != NUM_STATES {
            return Err(EnvError::InvalidPolicy("blackjack policy must cover 200 states".into()));
        }
        let mut kernel = Vec::with_capacity((NUM_STATES + 1) * 2);
        let push = |row: &mut Vec<Transition>, next: usize, reward: usize, prob: f64| {
            match row.iter_mut().find(|t| t.next == next && t.reward == reward) {
                Some(t) => t.prob += prob,
                None => row.push(Transition { next, reward, prob }),
            }
        };
        for i in 0..NUM_STATES {
            let s = BlackjackState::from_index(i).expect("in range");
            let mut hit = Vec::new();
            for c in 1..=10 {
                let hand = s.hand().add(c);
                if hand.bust() {
                    push(&mut hit, TERMINAL, LOSS, card_prob(c));
                } else {
                    push(&mut hit, s.with_hand(hand).index(), DRAW, card_prob(c));
                }
            }
            let mut stay = Vec::new();
            let dealer = dealer_final_distribution(s.dealer);
            for (k, &p) in dealer.iter().enumerate() {
                let hand = if k == 5 {
                    Hand { total: 22, soft: false }
                } else {
                    Hand { total: 17 + k as u8, soft: false }
                };
                if p > 0.0 {
                    push(&mut stay, TERMINAL, settle(s.player, hand), p);
                }
            }
            kernel.push(hit);
            kernel.push(stay);
        }
        for _ in 0..2 {
            kernel.push(vec![Transition {
                next: TERMINAL,
                reward: DRAW,
                prob: 1.0,
            }]);
        }
        let mut rows: Vec<Vec<f64>> = (0..NUM_STATES).map(|s| policy.row(s).to_vec()).collect();
        rows.push(vec![0.0, 1.0]);
        ExplicitMdp::new(NUM_STATES + 1, 2, REWARDS.to_vec(), 0, kernel, Some(TabularPolicy::new(rows)?))
    }

    /// Longest hand, in actions, when `policy` picks every action except
    /// possibly the first, which is free when `free_first` is set.
    pub fn longest_episode(policy: &TabularPolicy, free_first: bool) -> usize {
        fn longest(s: BlackjackState, free: bool, policy: &TabularPolicy, memo: &mut HashMap<(usize, bool), usize>) -> usize {
            if let Some(&v) = memo.get(&(s.index(), free)) {
                return v;
            }
            let mut best = 0;
            for a in [HIT, STAY] {
                if !free && policy.prob(s.index(), a) == 0.0 {
                    continue;
                }
                let len = if a == STAY {
                    1
                } else {
                    1 + (1..=10)
                        .map(|c| s.hand().add(c))
                        .filter(|h| !h.bust())
                        .map(|h| longest(s.with_hand(h), false, policy, memo))
                        .max()
                        .unwrap_or(0)
                };
                best = best.max(len);
            }
            memo.insert((s.index(), free), best);
            best
        }
        let start = Self::start_distribution();
        let mut memo = HashMap::new();
        (0..NUM_STATES)
            .filter(|&i| start[i] > 0.0)
            .map(|i| longest(BlackjackState::from_index(i).expect("in range"), free_first, policy, &mut memo))
            .max()
            .unwrap_or(0)
    }
}

impl Environment for Blackjack {
    fn num_actions(&self) -> usize {
        2
    }

    fn rewards(&self) -> &[f64] {
        &REWARDS
    }

    fn num_states(&self) -> usize {
        NUM_STATES
    }

    fn state(&self) -> usize {
        self.state.index()
    }

    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<Step, EnvError> {
        let outcome = match action {
            HIT => {
                let hand = self.state.hand().add(draw(rng));
                if hand.bust() {
                    Some(LOSS)
                } else {
                    self.state = self.state.with_hand(hand);
                    None
                }
            }
            STAY => {
                let mut dealer = Hand::EMPTY.add(self.state.dealer).add(draw(rng));
                while dealer.total < 17 {
                    dealer = dealer.add(draw(rng));
                }
                Some(settle(self.state.player, dealer))
            }
            _ => return Err(EnvError::InvalidAction { action, actions: 2 }),
        };
        Ok(match outcome {
            None => Step {
                reward: 0.0,
                episode_end: false,
            },
            Some(r) => {
                self.reset(rng);
                Step {
                    reward: REWARDS[r],
                    episode_end: true,
                }
            }
        })
    }

    fn reset(&mut self, rng: &mut Rng) {
        self.state = Self::deal(rng);
    }

    fn truncates_returns(&self) -> bool {
        true
    }

    fn max_episode_len(&self) -> Option<usize> {
        Some(Self::longest_episode(&TabularPolicy::uniform(NUM_STATES, 2), true))
    }

    fn return_alphabet(&self, _m: usize) -> Vec<f64> {
        REWARDS.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn state_space_has_200_states() {
        let env = Blackjack::new(&mut stream(0, Stream::Env));
        assert_eq!(env.num_states(), 200);
        for i in 0..NUM_STATES {
            assert_eq!(BlackjackState::from_index(i).unwrap().index(), i);
        }
        assert!(BlackjackState::from_index(200).is_none());
        assert_eq!(env.return_alphabet(20), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn target_policy_stays_on_20_and_21() {
        let pi = Blackjack::target_policy();
        for (player, action) in [(20, STAY), (21, STAY), (19, HIT), (12, HIT)] {
            for ace in [false, true] {
                let s = BlackjackState {
                    dealer: 5,
                    player,
                    usable_ace: ace,
                };
                assert_eq!(pi.prob(s.index(), action), 1.0);
            }
        }
    }

    #[test]
    fn hand_arithmetic() {
        let soft = Hand::EMPTY.add(1).add(1);
        assert_eq!(soft, Hand { total: 12, soft: true });
        assert_eq!(soft.add(10), Hand { total: 12, soft: false });
        assert_eq!(Hand { total: 21, soft: true }.add(1), Hand { total: 12, soft: false });
        assert!(Hand { total: 21, soft: false }.add(1).bust());
    }

    #[test]
    fn dealer_bust_is_a_win() {
        assert_eq!(settle(21, Hand { total: 26, soft: false }), WIN);
        assert_eq!(settle(18, Hand { total: 18, soft: false }), DRAW);
        assert_eq!(settle(17, Hand { total: 20, soft: false }), LOSS);
    }

    #[test]
    fn exact_distributions_are_normalized() {
        let start: f64 = Blackjack::start_distribution().iter().sum();
        assert!((start - 1.0).abs() < 1e-12);
        for d in 1..=10 {
            let total: f64 = dealer_final_distribution(d).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let mdp = Blackjack::exact_mdp(&Blackjack::target_policy()).unwrap();
        assert_eq!(mdp.num_states(), 201);
    }

    #[test]
    fn soft_twelve_is_the_longest_hand_under_the_target_policy() {
        // soft 12 -> soft 19 by seven aces, +3 to hard 12, seven more
        // aces to hard 19, +1 to 20, then stay
        assert_eq!(Blackjack::longest_episode(&Blackjack::target_policy(), false), 17);
    }
}
