use super::*;
use crate::error::{Error, Result};
use crate::graph::NodeId;

struct Silent;
impl NodeProgram for Silent {
    fn step(&mut self, _: &mut Ctx<'_, '_>) -> Result<Status> {
        Ok(Status::Done)
    }
}

/// Node 0 sends one word to everyone else in round 1; receivers record it.
#[derive(Default)]
struct Shout {
    got: Vec<(NodeId, u64)>,
}
impl NodeProgram for Shout {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        for m in ctx.inbox() {
            self.got.push((m.src, m.payload.words()[0]));
        }
        if ctx.round() == 1 && ctx.node() == 0 {
            for v in 1..ctx.n() as NodeId {
                ctx.send(v, Payload::from_words(&[v as u64], 8))?;
            }
        }
        Ok(Status::Done)
    }
}

#[derive(Debug)]
struct Double;
impl NodeProgram for Double {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        if ctx.node() == 0 {
            ctx.send(1, Payload::empty())?;
            ctx.send(1, Payload::empty())?;
        }
        Ok(Status::Done)
    }
}

#[derive(Debug)]
struct Fat;
impl NodeProgram for Fat {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        let b = ctx.bandwidth();
        ctx.send(0, Payload::from_words(&[0, 0, 0], b + 1))?;
        Ok(Status::Done)
    }
}

/// Token ring: each node forwards a counter to its successor, a few laps.
#[derive(Debug)]
struct Ring {
    seen: Vec<u64>,
}
impl NodeProgram for Ring {
    fn step(&mut self, ctx: &mut Ctx<'_, '_>) -> Result<Status> {
        let n = ctx.n() as u64;
        let next = ((ctx.node() as u64 + 1) % n) as NodeId;
        if ctx.round() == 1 && ctx.node() == 0 {
            ctx.send(next, Payload::from_words(&[0], 16))?;
        }
        let incoming: Vec<u64> = ctx.inbox().iter().map(|m| m.payload.words()[0]).collect();
        for c in incoming {
            self.seen.push(c);
            if c + 1 < 3 * n {
                ctx.send(next, Payload::from_words(&[c + 1], 16))?;
            }
        }
        Ok(Status::Done)
    }
}

#[test]
fn silent_stage_takes_one_round() {
    let (_, t) = run((0..5).map(|_| Silent).collect(), SimConfig::new(5, 0), "idle").unwrap();
    assert_eq!((t.rounds, t.messages_total), (1, 0));
}

#[test]
fn one_to_all_is_n_minus_one_messages_in_one_round() {
    let (progs, t) = run((0..16).map(|_| Shout::default()).collect(), SimConfig::new(16, 0), "shout").unwrap();
    assert_eq!((t.rounds, t.messages_total), (1, 15));
    assert_eq!(t.sent[0], 15);
    assert!(progs.iter().skip(1).enumerate().all(|(i, p)| p.got == vec![(0, i as u64 + 1)]));
}

#[test]
fn duplicate_link_use_fails_fast() {
    let err = run(vec![Double, Double], SimConfig::new(2, 0), "x").unwrap_err();
    assert!(matches!(err, Error::ModelViolation(_)));
}

#[test]
fn oversize_payload_fails_fast() {
    let err = run(vec![Fat, Fat, Fat], SimConfig::new(3, 0), "x").unwrap_err();
    assert!(matches!(err, Error::ModelViolation(_)));
}

#[test]
fn round_limit_is_enforced() {
    let mut cfg = SimConfig::new(4, 0);
    cfg.max_rounds = 5;
    let ring = (0..4).map(|_| Ring { seen: vec![] }).collect();
    assert!(matches!(run(ring, cfg, "ring"), Err(Error::ProtocolFailure(_))));
}

#[test]
fn past_deadline_stops_the_next_stage() {
    let mut net = Network::new(SimConfig::new(3, 0)).unwrap();
    net.run_stage("quiet", &mut [Silent, Silent, Silent]).unwrap();
    net.set_deadline(Some(std::time::Instant::now()));
    assert!(matches!(net.run_stage("quiet", &mut [Silent, Silent, Silent]), Err(Error::Timeout(_))));
    assert_eq!(net.transcript().rounds, 1);
}

#[test]
fn scrambled_handler_order_is_unobservable() {
    let mut cfg = SimConfig::new(7, 3);
    cfg.trace = true;
    let mut plain = Network::new(cfg.clone()).unwrap();
    let mut a: Vec<Ring> = (0..7).map(|_| Ring { seen: vec![] }).collect();
    plain.run_stage("ring", &mut a).unwrap();
    cfg.scramble = Some(99);
    let mut mixed = Network::new(cfg).unwrap();
    let mut b: Vec<Ring> = (0..7).map(|_| Ring { seen: vec![] }).collect();
    mixed.run_stage("ring", &mut b).unwrap();
    assert_eq!(plain.transcript(), mixed.transcript());
    assert!(a.iter().zip(&b).all(|(x, y)| x.seen == y.seen));
    let mut sa = plain.trace().unwrap().to_vec();
    let mut sb = mixed.trace().unwrap().to_vec();
    sa.sort_by_key(|t| (t.round, t.src, t.dst));
    sb.sort_by_key(|t| (t.round, t.src, t.dst));
    assert_eq!(sa, sb);
    check_link_rule(&sa).unwrap();
    assert_eq!(plain.transcript().rounds, 21);
}

#[test]
fn scopes_feed_step_and_protocol_maps() {
    let mut net = Network::new(SimConfig::new(8, 0)).unwrap();
    net.scoped("pi", |net| {
        let mut p: Vec<Shout> = (0..8).map(|_| Shout::default()).collect();
        net.run_stage("dgs", &mut p).map(|_| ())
    })
    .unwrap();
    let mut p: Vec<Shout> = (0..8).map(|_| Shout::default()).collect();
    net.run_stage("dsg", &mut p).unwrap();
    let t = net.transcript();
    assert_eq!(t.by_step["pi"], 7);
    assert_eq!(t.by_step["dsg"], 7);
    assert_eq!(t.by_scope["pi/dgs"], 7);
    assert_eq!(t.by_protocol.values().sum::<u64>(), t.messages_total);
    assert_eq!(t.received.iter().sum::<u64>(), t.messages_total);
}

#[test]
fn config_parses_plain_text() {
    let c = SimConfig::parse("# sim\nn = 64\nbeta = 4\nseed = 9\nmax_rounds = 100\n").unwrap();
    assert_eq!((c.n, c.beta, c.seed, c.max_rounds), (64, 4, 9, 100));
    assert_eq!(c.bandwidth(), 24);
    assert!(matches!(SimConfig::parse("n = 64\nfoo = 1"), Err(Error::Parse { line: 2, .. })));
    assert!(SimConfig::parse("n = 1").is_err());
}
