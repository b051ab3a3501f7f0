//! The discrete-event loop.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scenario::{AttackerMode, AttackerSpec, Scenario};
use super::trace::{summarize, Trace, TraceEvent};
use crate::attacker::jam::chips_ps;
use crate::attacker::timing::{chunk_us, jam_packet_us};
use crate::attacker::{classify_roles, measure_intervals, AnchorTracker, JamPlan, SnifferState, TimingEstimate};
use crate::channel::{propagate, superpose, ChannelParams, NodePosition, RxWindow};
use crate::error::{Error, Result};
use crate::phy::packet::packet_chips;
use crate::phy::sts::splitmix64;
use crate::phy::{assemble_packet, BasebandSignal, CodeTable, PacketConfig, PowerProfile, StsSeed, SPREADING_FACTOR};
use crate::ranging::{PacketRole, SessionSchedule, RangingRecord, SessionStatus, TwrMode};
use crate::receiver::{receive_packet, RxOutcome};
use crate::time::{chips_to_us, Picos, PS_PER_MS, PS_PER_S, PS_PER_US};

/// Payload length of every ranging message, in bytes.
pub const MESSAGE_BYTES: usize = 4;
/// Code periods of slack after a packet in each listening window.
const WINDOW_TAIL_PERIODS: usize = 8;
/// Emissions that ended this long ago can no longer reach any window.
const AIR_HORIZON_PS: Picos = 20 * PS_PER_MS;
/// Tolerance when matching a packet to the predicted poll time.
const POLL_TOLERANCE_US: f64 = 200.0;

struct Emission {
    node: u32,
    pos: NodePosition,
    start: Picos,
    pair: Option<usize>,
    session: u32,
    role: Option<PacketRole>,
    signal: Arc<BasebandSignal>,
}

impl Emission {
    fn end(&self) -> Picos {
        self.start + chips_ps(self.signal.len())
    }
}

enum EventKind {
    RxDone { node: u32, em: Arc<Emission>, window: RxWindow, arrival: Picos },
    Transmit(Arc<Emission>),
    PollDue { pair: usize, session: u32 },
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::RxDone { .. } => 0,
            EventKind::Transmit(_) => 1,
            EventKind::PollDue { .. } => 2,
        }
    }
}

struct Event {
    t: Picos,
    node: u32,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (Picos, u32, u8, u64) {
        (self.t, self.node, self.kind.rank(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

enum Phase {
    Sniff(Box<SnifferState>),
    Measure { config: PacketConfig, obs: Vec<Picos> },
    Attack { config: PacketConfig, est: TimingEstimate, plan: JamPlan, tracker: AnchorTracker },
    Idle,
}

struct Agent {
    spec: AttackerSpec,
    node: u32,
    pair: usize,
    phase: Phase,
    busy_until: Picos,
    rng: ChaCha8Rng,
    /// STS key of the jam packets; each jam uses the next counter.
    jam_key: u128,
    jams: u32,
}

struct PairState {
    records: BTreeMap<u32, RangingRecord>,
}

pub struct Engine<'a> {
    sc: &'a Scenario,
    table: &'a CodeTable,
    channel: ChannelParams,
    schedule: SessionSchedule,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    now: Picos,
    air: Vec<Arc<Emission>>,
    events: Vec<TraceEvent>,
    pairs: Vec<PairState>,
    agents: Vec<Agent>,
    jitter_rng: ChaCha8Rng,
    duration: Picos,
}

fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

fn message(role: PacketRole, pair: u32, session: u32) -> [u8; MESSAGE_BYTES] {
    [role as u8 + 1, pair as u8, (session >> 8) as u8, session as u8]
}

fn role_counter(role: PacketRole) -> u32 {
    match role {
        PacketRole::Poll => 0,
        PacketRole::Response => 1,
        PacketRole::Final => 2,
    }
}

/// Duration in microseconds of a full ranging packet for `cfg`.
pub fn ranging_packet_us(cfg: &PacketConfig, table: &CodeTable) -> Result<f64> {
    let code_len = table.get(cfg.preamble_code)?.len();
    Ok(chips_to_us(packet_chips(cfg, code_len, MESSAGE_BYTES, false)))
}

/// Runs a scenario against the built-in code table.
pub fn run(scenario: &Scenario) -> Result<Trace> {
    run_with_table(scenario, CodeTable::builtin())
}

pub fn run_with_table(scenario: &Scenario, table: &CodeTable) -> Result<Trace> {
    scenario.validate(table)?;
    Engine::new(scenario, table)?.run()
}

/// Runs only the first session of the first pair and returns its record.
pub fn run_session(scenario: &Scenario) -> Result<RangingRecord> {
    let mut one = scenario.clone();
    one.duration_s = (scenario.pairs[0].phase_us + 1.0) * 1e-6;
    let trace = run(&one)?;
    let rec = trace.sessions().find(|r| r.pair == scenario.pairs[0].id).cloned();
    rec.ok_or_else(|| Error::Precondition("no session completed".into()))
}

impl<'a> Engine<'a> {
    pub fn new(sc: &'a Scenario, table: &'a CodeTable) -> Result<Self> {
        let mut channel = sc.channel.clone();
        channel.rng_seed = stream_seed(sc.seed, channel.rng_seed);
        let mut schedule = sc.schedule;
        if schedule.jitter_enabled() {
            if schedule.packet_duration_us <= 0.0 {
                for p in &sc.pairs {
                    schedule.packet_duration_us = schedule.packet_duration_us.max(ranging_packet_us(&p.config, table)?);
                }
            }
            schedule.validate()?;
            let (t0, b) = (schedule.packet_duration_us, schedule.random_jitter_bound_us);
            if b + t0 >= schedule.t1_us || schedule.t1_us + b + t0 >= schedule.t2_us {
                return Err(Error::InvalidScenario("jitter bound leaves no room between packets".into()));
            }
        }
        let npairs = sc.pairs.len() as u32;
        let mut agents = Vec::new();
        for (i, spec) in sc.attackers.iter().enumerate() {
            let node = 2 * npairs + i as u32;
            let pair = sc.pairs.iter().position(|p| p.id == spec.target_pair).expect("validated");
            let victim = &sc.pairs[pair];
            let phase = match spec.mode {
                AttackerMode::Sniff | AttackerMode::Full => {
                    let domains = spec.domains.clone().unwrap_or_default();
                    Phase::Sniff(Box::new(SnifferState::new(domains)?))
                }
                AttackerMode::Attack => {
                    let est = nominal_estimate(sc, &victim.config, table)?;
                    Phase::Attack {
                        config: victim.config,
                        est,
                        plan: make_plan(spec, &victim.config, table)?,
                        tracker: AnchorTracker { anchor: None, ..AnchorTracker::new(0, est.t3_hat_us) },
                    }
                }
            };
            agents.push(Agent {
                spec: spec.clone(),
                node,
                pair,
                phase,
                busy_until: 0,
                rng: ChaCha8Rng::seed_from_u64(stream_seed(sc.seed, 1000 + u64::from(node))),
                jam_key: u128::from(stream_seed(sc.seed, 2000 + u64::from(node))),
                jams: 0,
            });
        }
        let mut e = Engine {
            sc,
            table,
            channel,
            schedule,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            air: Vec::new(),
            events: Vec::new(),
            pairs: sc.pairs.iter().map(|_| PairState { records: BTreeMap::new() }).collect(),
            agents,
            jitter_rng: ChaCha8Rng::seed_from_u64(stream_seed(sc.seed, 1)),
            duration: (sc.duration_s * PS_PER_S as f64).round() as Picos,
        };
        for (i, p) in sc.pairs.iter().enumerate() {
            let t = (p.phase_us * PS_PER_US as f64).round() as Picos;
            e.push(t, 2 * i as u32, EventKind::PollDue { pair: i, session: 0 });
        }
        Ok(e)
    }

    fn push(&mut self, t: Picos, node: u32, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event { t, node, seq: self.seq, kind }));
    }

    pub fn run(mut self) -> Result<Trace> {
        while let Some(Reverse(ev)) = self.queue.pop() {
            self.now = ev.t;
            match ev.kind {
                EventKind::PollDue { pair, session } => self.poll_due(pair, session)?,
                EventKind::Transmit(em) => self.emit(em),
                EventKind::RxDone { node, em, window, arrival } => self.rx_done(node, em, window, arrival)?,
            }
        }
        for p in self.pairs.iter_mut() {
            for (_, rec) in std::mem::take(&mut p.records) {
                self.events.push(TraceEvent::Session { t: self.now, record: rec });
            }
        }
        let initiators: BTreeMap<u32, u32> =
            self.sc.pairs.iter().enumerate().map(|(i, p)| (p.id, 2 * i as u32)).collect();
        let summary = summarize(&self.events, &initiators);
        Ok(Trace { events: self.events, summary, initiators })
    }

    fn position(&self, node: u32) -> NodePosition {
        let npairs = self.sc.pairs.len() as u32;
        if node < 2 * npairs {
            let p = &self.sc.pairs[(node / 2) as usize];
            if node.is_multiple_of(2) {
                p.initiator.position
            } else {
                p.responder.position
            }
        } else {
            self.sc.attackers[(node - 2 * npairs) as usize].position
        }
    }

    fn victim_packet(&self, pair: usize, session: u32, role: PacketRole) -> Result<Arc<BasebandSignal>> {
        let p = &self.sc.pairs[pair];
        let seed = StsSeed::new(p.sts_key, session.wrapping_mul(4) + role_counter(role));
        let msg = message(role, p.id, session);
        let sig = assemble_packet(&p.config, self.table, seed, &msg, &PowerProfile::nominal(), false)?;
        Ok(Arc::new(sig))
    }

    fn poll_due(&mut self, pair: usize, session: u32) -> Result<()> {
        let t = self.now;
        if t >= self.duration {
            return Ok(());
        }
        let spec = &self.sc.pairs[pair];
        let clock = spec.initiator.clock;
        let mut rec = RangingRecord::new(spec.id, session, t);
        let t_sp = clock.local(t);
        rec.t_sp = Some(t_sp);
        self.pairs[pair].records.insert(session, rec);
        let signal = self.victim_packet(pair, session, PacketRole::Poll)?;
        let node = 2 * pair as u32;
        self.emit(Arc::new(Emission {
            node,
            pos: spec.initiator.position,
            start: t,
            pair: Some(pair),
            session,
            role: Some(PacketRole::Poll),
            signal,
        }));
        let next = clock.global(t_sp + self.sc.schedule.t3_ps() as i64);
        self.push(next, node, EventKind::PollDue { pair, session: session + 1 });
        Ok(())
    }

    fn emit(&mut self, em: Arc<Emission>) {
        let horizon = self.now.saturating_sub(AIR_HORIZON_PS);
        self.air.retain(|e| e.end() >= horizon);
        self.events.push(TraceEvent::Emit {
            t: em.start,
            node: em.node,
            pair: em.pair.map(|p| self.sc.pairs[p].id),
            session: em.pair.map(|_| em.session),
            role: em.role,
            jam: em.role.is_none(),
            end: em.end(),
        });
        self.air.push(em.clone());
        let (Some(pair), Some(role)) = (em.pair, em.role) else {
            return;
        };
        let mut listeners: Vec<(u32, u8)> = Vec::new();
        let intended = match role {
            PacketRole::Poll | PacketRole::Final => 2 * pair as u32 + 1,
            PacketRole::Response => 2 * pair as u32,
        };
        listeners.push((intended, self.sc.pairs[pair].config.channel));
        for a in &self.agents {
            if a.pair == pair {
                let ch = match &a.phase {
                    Phase::Sniff(s) => s.candidate().channel,
                    Phase::Measure { config, .. } | Phase::Attack { config, .. } => config.channel,
                    Phase::Idle => continue,
                };
                listeners.push((a.node, ch));
            }
        }
        let margin = self.sc.receiver.margin_chips;
        let code_len = self.table.get(self.sc.pairs[pair].config.preamble_code).map(|c| c.len()).unwrap_or(127);
        let chips = em.signal.len() + 2 * margin + WINDOW_TAIL_PERIODS * code_len * SPREADING_FACTOR;
        for (node, channel) in listeners {
            let d = em.pos.distance(&self.position(node));
            let arrival = em.start + self.channel.delay_ps(d);
            let start = arrival.saturating_sub(chips_ps(margin));
            let window = RxWindow { start, chips, channel, receiver: node };
            let done = start + chips_ps(chips);
            self.push(done, node, EventKind::RxDone { node, em: em.clone(), window, arrival });
        }
    }

    fn listen(&self, node: u32, window: &RxWindow) -> Result<BasebandSignal> {
        let pos = self.position(node);
        let w_end = window.start + chips_ps(window.chips);
        let mut signals = Vec::new();
        for e in &self.air {
            if e.node == node {
                continue;
            }
            let delay = self.channel.delay_ps(e.pos.distance(&pos));
            let (a, b) = (e.start + delay, e.end() + delay);
            if a < w_end && b > window.start {
                let mut s = (*e.signal).clone();
                s.start_time = e.start;
                signals.push(propagate(&s, e.pos, pos, &self.channel));
            }
        }
        superpose(&signals, window, &self.channel)
    }

    fn rx_done(&mut self, node: u32, em: Arc<Emission>, window: RxWindow, arrival: Picos) -> Result<()> {
        let pair = em.pair.expect("only victim packets open windows");
        let role = em.role.expect("victim packets carry a role");
        let npairs = self.sc.pairs.len() as u32;
        if node >= 2 * npairs {
            return self.agent_rx(node - 2 * npairs, &em, &window, arrival);
        }
        let spec = &self.sc.pairs[pair];
        let seed = StsSeed::new(spec.sts_key, em.session.wrapping_mul(4) + role_counter(role));
        let waveform = self.listen(node, &window)?;
        let out = receive_packet(&waveform, &spec.config, self.table, Some(seed), &self.sc.receiver)?;
        self.events.push(TraceEvent::Rx {
            t: self.now,
            node,
            pair: spec.id,
            session: em.session,
            role,
            arrival,
            record: out.record(),
        });
        let schedule = self.schedule;
        let mode = self.sc.mode;
        let Some(rec) = self.pairs[pair].records.get_mut(&em.session) else {
            return Ok(());
        };
        let ts = match out {
            RxOutcome::Ok(ref s) => s.rx_timestamp,
            _ => {
                rec.status = SessionStatus::Dropped { at: role };
                self.finish(pair, em.session);
                return Ok(());
            }
        };
        match role {
            PacketRole::Poll => {
                let clock = spec.responder.clock;
                let t_rp = clock.local(ts);
                let jitter = schedule.draw_jitter_ps(&mut self.jitter_rng);
                let t_sr = t_rp + schedule.t1_ps() + jitter;
                rec.t_rp = Some(t_rp);
                rec.t_sr = Some(t_sr);
                let signal = self.victim_packet(pair, em.session, PacketRole::Response)?;
                let start = clock.global(t_sr).max(self.now);
                let e = Emission {
                    node: 2 * pair as u32 + 1,
                    pos: spec.responder.position,
                    start,
                    pair: Some(pair),
                    session: em.session,
                    role: Some(PacketRole::Response),
                    signal,
                };
                self.push(start, e.node, EventKind::Transmit(Arc::new(e)));
            }
            PacketRole::Response => {
                let clock = spec.initiator.clock;
                rec.t_rr = Some(clock.local(ts));
                match mode {
                    TwrMode::Ss => {
                        rec.finish(TwrMode::Ss)?;
                        self.finish(pair, em.session);
                    }
                    TwrMode::Ds => {
                        let t_sf = rec.t_sp.expect("poll stamped") + schedule.t2_ps();
                        rec.t_sf = Some(t_sf);
                        let signal = self.victim_packet(pair, em.session, PacketRole::Final)?;
                        let start = clock.global(t_sf).max(self.now);
                        let e = Emission {
                            node: 2 * pair as u32,
                            pos: spec.initiator.position,
                            start,
                            pair: Some(pair),
                            session: em.session,
                            role: Some(PacketRole::Final),
                            signal,
                        };
                        self.push(start, e.node, EventKind::Transmit(Arc::new(e)));
                    }
                }
            }
            PacketRole::Final => {
                rec.t_rf = Some(spec.responder.clock.local(ts));
                rec.finish(TwrMode::Ds)?;
                self.finish(pair, em.session);
            }
        }
        Ok(())
    }

    fn finish(&mut self, pair: usize, session: u32) {
        if let Some(record) = self.pairs[pair].records.remove(&session) {
            self.events.push(TraceEvent::Session { t: self.now, record });
        }
    }

    fn agent_rx(&mut self, idx: u32, em: &Emission, window: &RxWindow, arrival: Picos) -> Result<()> {
        let idx = idx as usize;
        let node = self.agents[idx].node;
        if arrival < self.agents[idx].busy_until || matches!(self.agents[idx].phase, Phase::Idle) {
            return Ok(());
        }
        let cfg = match &self.agents[idx].phase {
            Phase::Sniff(s) => s.candidate(),
            Phase::Measure { config, .. } | Phase::Attack { config, .. } => *config,
            Phase::Idle => unreachable!(),
        };
        let waveform = self.listen(node, window)?;
        let out = receive_packet(&waveform, &cfg, self.table, None, &self.sc.receiver)?;
        let pair_id = self.sc.pairs[em.pair.expect("victim")].id;
        self.events.push(TraceEvent::Rx {
            t: self.now,
            node,
            pair: pair_id,
            session: em.session,
            role: em.role.expect("victim"),
            arrival,
            record: out.record(),
        });
        let now = self.now;
        let table = self.table;
        let agent = &mut self.agents[idx];
        let mut log = Vec::new();
        let mut next_phase = None;
        let mut jam_at = None;
        match &mut agent.phase {
            Phase::Sniff(s) => match s.step(out.kind()) {
                Ok(entry) => {
                    log.extend(entry.map(|entry| TraceEvent::Sniff { t: now, node, entry }));
                    if let Some(config) = s.result() {
                        log.push(TraceEvent::Sniffed { t: now, node, config, packets: s.packets_consumed });
                        next_phase = Some(match agent.spec.mode {
                            AttackerMode::Sniff => Phase::Idle,
                            _ => Phase::Measure { config, obs: Vec::new() },
                        });
                    }
                }
                Err(e) => {
                    log.push(TraceEvent::Timing { t: now, node, estimate: None, error: Some(e.to_string()) });
                    next_phase = Some(Phase::Idle);
                }
            },
            Phase::Measure { config, obs } => {
                if let Some(ts) = out.timestamp() {
                    obs.push(ts);
                    let roles = classify_roles(obs);
                    let polls = roles.iter().filter(|r| **r == PacketRole::Poll).count();
                    if polls > agent.spec.measure_sessions {
                        let labelled: Vec<(PacketRole, Picos)> = roles.into_iter().zip(obs.iter().copied()).collect();
                        match measure_intervals(&labelled, config, table, agent.spec.hardware.t_delta_us) {
                            Ok(est) => {
                                log.push(TraceEvent::Timing { t: now, node, estimate: Some(est), error: None });
                                next_phase = Some(Phase::Attack {
                                    config: *config,
                                    est,
                                    plan: make_plan(&agent.spec, config, table)?,
                                    tracker: AnchorTracker::new(est.anchor, est.t3_hat_us),
                                });
                                agent.busy_until = est.anchor + busy_span(&est);
                            }
                            Err(e) => {
                                log.push(TraceEvent::Timing { t: now, node, estimate: None, error: Some(e.to_string()) });
                                let first_session_end = labelled.iter().skip(1).position(|(r, _)| *r == PacketRole::Poll);
                                if let Some(n) = first_session_end {
                                    obs.drain(..=n);
                                }
                            }
                        }
                    }
                }
            }
            Phase::Attack { est, plan, tracker, config } => {
                if let Some(ts) = out.timestamp() {
                    let is_poll = match tracker.anchor {
                        None => true,
                        Some(a) if ts > a => {
                            let gap = (ts - a) as f64 / PS_PER_US as f64;
                            let k = (gap / tracker.t3_us).round().max(1.0);
                            (gap - k * tracker.t3_us).abs() <= POLL_TOLERANCE_US
                        }
                        Some(_) => false,
                    };
                    if is_poll {
                        tracker.observe(ts);
                        let t_measure = agent.spec.t_measure_us.unwrap_or(match plan.target_packet {
                            PacketRole::Final => est.t2_hat_us,
                            _ => est.t1_hat_us,
                        });
                        let aim = plan.aim_offset_chips(config, table, MESSAGE_BYTES)?;
                        let t = agent.spec.hardware.emission_time(ts, t_measure, est, chips_ps(aim), &mut agent.rng)?;
                        let jam = plan.build(table, StsSeed::new(agent.jam_key, agent.jams), 1.0)?;
                        agent.jams = agent.jams.wrapping_add(1);
                        jam_at = Some((t, Arc::new(jam)));
                        agent.busy_until = ts + busy_span(est);
                    }
                }
            }
            Phase::Idle => {}
        }
        if let Some(p) = next_phase {
            agent.phase = p;
        }
        let pos = agent.spec.position;
        self.events.extend(log);
        if let Some((t, signal)) = jam_at {
            let e = Emission { node, pos, start: t.max(now), pair: None, session: 0, role: None, signal };
            self.push(t.max(now), node, EventKind::Transmit(Arc::new(e)));
        }
        Ok(())
    }
}

fn busy_span(est: &TimingEstimate) -> Picos {
    let last = if est.t2_hat_us.is_finite() { est.t2_hat_us.max(est.t1_hat_us) } else { est.t1_hat_us };
    ((last + POLL_TOLERANCE_US) * PS_PER_US as f64).round() as Picos
}

fn make_plan(spec: &AttackerSpec, victim: &PacketConfig, table: &CodeTable) -> Result<JamPlan> {
    match spec.jam_code {
        Some(code) => JamPlan::with_code(victim, spec.target_packet, spec.aim, spec.gain, code),
        None => JamPlan::new(victim, table, spec.target_packet, spec.aim, spec.gain),
    }
}

/// Timing estimate from the scenario's nominal schedule, for attackers that
/// skip the measuring phase.
fn nominal_estimate(sc: &Scenario, cfg: &PacketConfig, table: &CodeTable) -> Result<TimingEstimate> {
    let s = &sc.schedule;
    let mut est = TimingEstimate {
        t1_hat_us: s.t1_us,
        t2_hat_us: if sc.mode == TwrMode::Ds { s.t2_us } else { f64::NAN },
        t3_hat_us: s.t3_ms * 1000.0,
        anchor: 0,
        t_delta_us: crate::attacker::DEFAULT_T_DELTA_US,
        t_chunk_us: chunk_us(cfg, table)?,
        t_packet_us: jam_packet_us(cfg, table)?,
        attack_delay_us: 0.0,
    };
    est.attack_delay_us = crate::attacker::compute_attack_delay(&est)?;
    Ok(est)
}
