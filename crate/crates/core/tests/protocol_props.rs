use patrol_core::protocol::{
    parse_mission, parse_update, serialize_mission, serialize_update, EventKeyword, EventRequest,
    EventResult, KeywordRegistry, MissionMessage, ObstacleClass, ObstacleEntry, SemanticLocation,
    UpdateMessage,
};
use proptest::prelude::*;

fn location() -> impl Strategy<Value = SemanticLocation> {
    ("[a-z]{1,10}", 1u32..500).prop_map(|(k, i)| SemanticLocation::new(&k, i).unwrap())
}

fn keyword() -> impl Strategy<Value = EventKeyword> {
    prop_oneof![
        Just(EventKeyword::new(EventKeyword::CLASS_WAITING).unwrap()),
        Just(EventKeyword::new(EventKeyword::ELEVATOR_REPAIR).unwrap()),
    ]
}

fn class() -> impl Strategy<Value = ObstacleClass> {
    (0..ObstacleClass::COUNT).prop_map(|i| ObstacleClass::ALL[i])
}

fn mission() -> impl Strategy<Value = MissionMessage> {
    let events = prop::collection::btree_set(1u32..10_000, 0..6).prop_flat_map(|nums| {
        let n = nums.len();
        (
            Just(nums.into_iter().collect::<Vec<_>>()),
            prop::collection::vec((keyword(), location()), n),
        )
    });
    let obstacles = prop::collection::btree_set(1u32..10_000, 0..6).prop_flat_map(|nums| {
        let n = nums.len();
        (
            Just(nums.into_iter().collect::<Vec<_>>()),
            prop::collection::vec((class(), 1u32..100, location()), n),
        )
    });
    (events, obstacles, any::<bool>()).prop_map(|((en, ev), (on, ob), reverse)| {
        let mut events: Vec<EventRequest> = en
            .into_iter()
            .zip(ev)
            .map(|(number, (keyword, location))| EventRequest {
                number,
                keyword,
                location,
            })
            .collect();
        if reverse {
            events.reverse();
        }
        let obstacles = on
            .into_iter()
            .zip(ob)
            .map(|(number, (obstacle_type, count, location))| ObstacleEntry {
                number,
                obstacle_type,
                count,
                location,
            })
            .collect();
        MissionMessage::new(events, obstacles).unwrap()
    })
}

fn update() -> impl Strategy<Value = UpdateMessage> {
    let results = prop::collection::btree_map(1u32..10_000, any::<bool>(), 0..6);
    let obstacles = prop::collection::vec((class(), 1u32..100, location()), 0..8);
    (results, obstacles).prop_map(|(results, obstacles)| {
        UpdateMessage::renumbered(
            results
                .into_iter()
                .map(|(number, ongoing)| EventResult { number, ongoing })
                .collect(),
            obstacles
                .into_iter()
                .map(|(obstacle_type, count, location)| ObstacleEntry {
                    number: 0,
                    obstacle_type,
                    count,
                    location,
                })
                .collect(),
        )
        .unwrap()
    })
}

/// Valid text with random byte-level damage.
fn damaged(base: Vec<u8>) -> impl Strategy<Value = Vec<u8>> {
    let len = base.len().max(1);
    prop::collection::vec((0..len, any::<u8>(), 0u8..3), 1..6).prop_map(move |edits| {
        let mut bytes = base.clone();
        for (pos, byte, op) in edits {
            let pos = pos.min(bytes.len());
            match op {
                0 if pos < bytes.len() => bytes[pos] = byte,
                1 => bytes.insert(pos, byte),
                _ if pos < bytes.len() => {
                    bytes.remove(pos);
                }
                _ => bytes.push(byte),
            }
        }
        bytes
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mission_round_trips(m in mission()) {
        let registry = KeywordRegistry::default();
        let bytes = serialize_mission(&m);
        prop_assert_eq!(parse_mission(&bytes, &registry).unwrap(), m);
    }

    #[test]
    fn update_round_trips(u in update()) {
        let bytes = serialize_update(&u);
        prop_assert_eq!(parse_update(&bytes).unwrap(), u);
    }

    #[test]
    fn crlf_and_spacing_are_tolerated(m in mission()) {
        let registry = KeywordRegistry::default();
        let text = String::from_utf8(serialize_mission(&m)).unwrap();
        let loose = text.replace(", ", " ,  ").replace('\n', "\r\n");
        prop_assert_eq!(parse_mission(loose.as_bytes(), &registry).unwrap(), m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn parsers_are_total_on_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let registry = KeywordRegistry::default();
        let _ = parse_mission(&bytes, &registry);
        let _ = parse_update(&bytes);
    }

    #[test]
    fn damaged_messages_parse_or_fail_cleanly(bytes in mission().prop_flat_map(|m| damaged(serialize_mission(&m)))) {
        let registry = KeywordRegistry::default();
        if let Ok(m) = parse_mission(&bytes, &registry) {
            let canonical = serialize_mission(&m);
            prop_assert_eq!(parse_mission(&canonical, &registry).unwrap(), m);
        }
        if let Err(e) = parse_update(&bytes) {
            prop_assert!(e.line >= 1);
        }
    }
}

#[test]
fn empty_file_is_empty_message() {
    let registry = KeywordRegistry::default();
    assert!(parse_mission(b"", &registry).unwrap().is_empty());
    assert_eq!(parse_update(b"").unwrap(), UpdateMessage::empty());
}
