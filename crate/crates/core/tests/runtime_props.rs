mod common;

use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;

use brickstage_core::export::{canonical_outputs_bytes, canonical_scene_bytes};
use brickstage_core::replay::run_schedule;
use brickstage_core::runtime::Status;
use brickstage_core::{
    parse_project, Brick, CostumeSizes, Emitted, EventIn, Project, Script, Session, Sprite,
    StageConfig, Trigger,
};
use common::{random_case, random_project, rng};

fn project(rate: u32, sprites: Vec<Sprite>) -> Arc<Project> {
    Arc::new(Project {
        format_version: 1,
        name: "t".into(),
        stage: StageConfig {
            width: 480,
            height: 800,
            tick_rate: rate,
        },
        sprites,
    })
}

fn sprite(name: &str, scripts: Vec<Script>) -> Sprite {
    Sprite {
        name: name.into(),
        costumes: vec![],
        sounds: vec![],
        scripts,
    }
}

fn script(trigger: Trigger, bricks: Vec<Brick>) -> Script {
    Script { trigger, bricks }
}

fn session(p: Arc<Project>) -> Session {
    Session::new(p, Arc::new(CostumeSizes::new()), 0, None).unwrap()
}

fn speak(text: &str) -> Brick {
    Brick::Speak { text: text.into() }
}

fn first_speak_tick(outputs: &[(u64, Vec<Emitted>)], text: &str) -> Option<u64> {
    outputs
        .iter()
        .find(|(_, es)| {
            es.iter()
                .any(|e| matches!(e, Emitted::Speak { text: t, .. } if t == text))
        })
        .map(|(t, _)| *t)
}

/// Steps a case tick by tick, checking per-step invariants along the way.
fn step_checked(case_seed: u64) {
    let case = random_case(case_seed);
    let mut s = Session::new(
        Arc::clone(&case.project),
        Arc::clone(&case.sizes),
        case.seed,
        None,
    )
    .unwrap();
    let mut pending = case.events.iter().peekable();
    while s.tick() <= case.end_tick && !s.is_stopped() {
        let tick = s.tick();
        while let Some(e) = pending.next_if(|e| e.tick <= tick) {
            s.inject(e.event.clone());
        }
        let stopping = s.pending_events().contains(&EventIn::Stop);
        let runnable: Vec<_> = s
            .instances()
            .iter()
            .filter(|i| i.status == Status::Runnable)
            .map(|i| i.id)
            .collect();
        s.step().unwrap();

        // Single-instance rule.
        let mut slots = HashSet::new();
        for i in s.instances().iter().filter(|i| i.is_live()) {
            assert!(
                slots.insert((i.sprite_index, i.script_index)),
                "case {case_seed} tick {tick}: two live instances of one script"
            );
        }

        // Fairness: everything runnable at the start of the step made
        // progress, finished, or was restarted (which replaces its id).
        if !stopping {
            for id in runnable {
                if let Some(i) = s.instances().iter().find(|i| i.id == id) {
                    assert_eq!(
                        i.active_tick(),
                        Some(tick),
                        "case {case_seed} tick {tick}: instance {id:?} starved"
                    );
                }
            }
        }
    }
}

#[test]
fn invariants_hold_over_generated_sessions() {
    for seed in 0..300 {
        step_checked(seed);
    }
}

#[test]
fn runs_are_deterministic() {
    for seed in 0..100 {
        let case = random_case(seed);
        let run = || {
            let mut s = Session::new(
                Arc::clone(&case.project),
                Arc::clone(&case.sizes),
                case.seed,
                None,
            )
            .unwrap();
            let trace = run_schedule(&mut s, &case.events, case.end_tick).unwrap();
            trace
                .records
                .iter()
                .map(|r| {
                    (
                        canonical_scene_bytes(&r.scene),
                        canonical_outputs_bytes(&r.outputs),
                    )
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run(), "case {seed}");
    }
}

#[test]
fn cloned_sessions_stay_in_lockstep() {
    let p = Arc::new(random_project(&mut rng(99)));
    let mut a = session(Arc::clone(&p));
    a.step().unwrap();
    let mut b = a.clone();
    for _ in 0..100 {
        assert_eq!(a.step().unwrap(), b.step().unwrap());
        assert_eq!(a.scene(), b.scene());
    }
}

#[test]
fn forever_never_completes_over_ten_thousand_ticks() {
    for seed in 0..20u64 {
        // A random body without broadcasts, so nothing can restart the loop.
        let mut body: Vec<Brick> = random_project(&mut rng(seed))
            .sprites
            .into_iter()
            .flat_map(|s| s.scripts)
            .flat_map(|s| s.bricks)
            .filter(|b| {
                !matches!(
                    b,
                    Brick::Broadcast { .. }
                        | Brick::BroadcastAndWait { .. }
                        | Brick::SetCostume { .. }
                        | Brick::PlaySound { .. }
                        | Brick::Repeat { .. }
                        | Brick::Forever { .. }
                )
            })
            .collect();
        body.truncate(8);
        let p = project(
            30,
            vec![sprite(
                "S",
                vec![script(
                    Trigger::WhenProgramStarts,
                    vec![Brick::Forever { body }],
                )],
            )],
        );
        let mut s = session(p);
        s.step().unwrap();
        let id = s.instances()[0].id;
        for _ in 1..10_000 {
            let out = s.step().unwrap();
            assert!(!out.emitted.contains(&Emitted::ProgramEnded), "seed {seed}");
        }
        assert_eq!(s.instances().len(), 1);
        assert_eq!(s.instances()[0].id, id);
        assert!(s.instances()[0].is_live());
    }
}

#[test]
fn unequal_seeds_diverge_on_random_placement() {
    let doc = br#"{"format_version":1,"name":"r","stage":{"width":480,"height":800,"tick_rate":30},"sprites":[{"name":"S","costumes":[],"sounds":[],"scripts":[{"trigger":{"type":"WhenProgramStarts"},"bricks":[{"type":"Repeat","count":10,"body":[{"type":"PlaceAtRandom","xmin":-1000,"xmax":1000,"ymin":-1000,"ymax":1000}]}]}]}]}"#;
    let p = Arc::new(parse_project(doc).unwrap());
    let trace = |seed| {
        let mut s =
            Session::new(Arc::clone(&p), Arc::new(CostumeSizes::new()), seed, None).unwrap();
        run_schedule(&mut s, &[], 12).unwrap()
    };
    assert_ne!(
        brickstage_core::trace_digest(&trace(1)),
        brickstage_core::trace_digest(&trace(2))
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn change_x_by_is_additive(x0 in any::<i32>(), a in any::<i32>(), b in any::<i32>()) {
        let p = project(30, vec![sprite("S", vec![script(
            Trigger::WhenProgramStarts,
            vec![Brick::PlaceAt { x: x0, y: 0 }, Brick::ChangeXBy { dx: a }, Brick::ChangeXBy { dx: b }],
        )])]);
        let mut s = session(p);
        s.step().unwrap();
        let want = i64::from(x0) + i64::from(a) + i64::from(b);
        prop_assert_eq!(s.scene().entries[0].x, want as f64);
    }

    #[test]
    fn glide_lands_exactly_on_target(
        from in (any::<i32>(), any::<i32>()),
        to in (any::<i32>(), any::<i32>()),
        millis in 1u64..3000,
        rate in prop::sample::select(vec![1u32, 7, 30, 60, 240]),
    ) {
        let p = project(rate, vec![sprite("S", vec![script(
            Trigger::WhenProgramStarts,
            vec![
                Brick::PlaceAt { x: from.0, y: from.1 },
                Brick::GlideTo { x: to.0, y: to.1, millis },
                speak("arrived"),
            ],
        )])]);
        let ticks = (millis * u64::from(rate)).div_ceil(1000).max(1);
        let mut s = session(p);
        for _ in 0..ticks {
            s.step().unwrap();
        }
        let e = &s.scene().entries[0];
        prop_assert_eq!(e.x.to_bits(), f64::from(to.0).to_bits());
        prop_assert_eq!(e.y.to_bits(), f64::from(to.1).to_bits());
        // The glide occupies exactly `ticks` ticks; the next brick runs after.
        let out = s.step().unwrap();
        let spoke = out.emitted.iter().any(|e| matches!(e, Emitted::Speak { .. }));
        prop_assert!(spoke);
    }

    /// The sender resumes no earlier than the tick on which its last
    /// receiver finished.
    #[test]
    fn broadcast_and_wait_resumes_after_receivers(
        waits in prop::collection::vec(0u64..2000, 1..5),
        rate in prop::sample::select(vec![10u32, 30, 60]),
    ) {
        let mut sprites = vec![sprite("Sender", vec![script(
            Trigger::WhenProgramStarts,
            vec![Brick::BroadcastAndWait { message: "m".into() }, speak("after")],
        )])];
        for (i, w) in waits.iter().enumerate() {
            sprites.push(sprite(&format!("R{i}"), vec![script(
                Trigger::WhenIReceive { message: "m".into() },
                vec![Brick::Wait { millis: *w }, speak(&format!("done{i}"))],
            )]));
        }
        let mut s = session(project(rate, sprites));
        let mut outputs = Vec::new();
        for _ in 0..300 {
            let o = s.step().unwrap();
            outputs.push((o.tick, o.emitted));
        }
        let after = first_speak_tick(&outputs, "after").expect("sender resumed");
        for i in 0..waits.len() {
            let done = first_speak_tick(&outputs, &format!("done{i}")).expect("receiver finished");
            prop_assert!(after >= done, "after {} < done{} {}", after, i, done);
        }
    }
}
