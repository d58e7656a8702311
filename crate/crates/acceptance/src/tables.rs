//! Logic tables restated from the module descriptions, one clause per sentence
//! of the source prose.

/// Breakthrough bucket labels in document order.
pub const BUCKETS: [&str; 3] = ["few", "intermediate", "huge"];

/// Large capability jump to HLMI, or from HLMI to well beyond it.
pub fn discontinuity(
    hardware_bottlenecked: bool,
    prehlmi_near_capable: bool,
    missing_gears: bool,
    bucket: &str,
    overshoot: bool,
    hardware_overhang: bool,
) -> bool {
    // Hardware-limited: a jump needs pre-HLMI systems with slightly less
    // compute to be much less capable.
    // Software-limited: a jump needs missing gears or very few remaining breakthroughs.
    let jump_to = match hardware_bottlenecked {
        true => !prehlmi_near_capable,
        false => missing_gears || bucket == "few",
    };
    // Jump from HLMI: the first HLMI overshoots, or a hardware overhang lets it scale.
    let jump_from = overshoot || hardware_overhang;
    jump_to || jump_from
}

/// Software path needs all three of its conditions, hardware path all three of its own.
pub fn intelligence_explosion(
    strongly_increasing: bool,
    upper_limit_far_above: bool,
    previous_intelligence_bottleneck: bool,
    scales_with_researchers: bool,
    hw_not_strongly_harder: bool,
    room_for_improvement: bool,
) -> bool {
    let software = [!strongly_increasing, upper_limit_far_above, previous_intelligence_bottleneck];
    let hardware = [scales_with_researchers, hw_not_strongly_harder, room_for_improvement];
    software.iter().all(|c| *c) || hardware.iter().all(|c| *c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcomes {
    pub misaligned_hlmi: bool,
    pub catastrophically_misaligned: bool,
    pub loss_slow_rolling: bool,
    pub loss_correlated: bool,
    pub loss_moloch: bool,
}

/// Inputs in the order hlmi, correct_course, aligned_ahead, lead_can_dsa,
/// pursues_dsa, humans_misaligned, influence_seeking, dependency,
/// proxies_diverge, moloch_burn.
pub fn outcomes(b: [bool; 10]) -> Outcomes {
    let [hlmi, correct_course, aligned_ahead, can_dsa, pursues_dsa, humans_misaligned, influence, dependency, proxies, moloch] = b;
    // Three conditions: HLMI arises, no course correction, not aligned ahead of time.
    let misaligned = hlmi && !correct_course && !aligned_ahead;
    // Lead project achieves DSA: it can, and it chooses to.
    let achieves_dsa = hlmi && can_dsa && pursues_dsa;
    // Lead project is misaligned: technically, or through its humans.
    let project_misaligned = misaligned || humans_misaligned;
    // Loss-of-control modes all need no project to have achieved DSA.
    let no_dsa = !achieves_dsa;
    Outcomes {
        misaligned_hlmi: misaligned,
        catastrophically_misaligned: achieves_dsa && project_misaligned,
        // Imperfect proxies, on a society dependent on AI.
        loss_slow_rolling: no_dsa && misaligned && dependency && proxies,
        // Influence-seeking, on a society dependent on AI.
        loss_correlated: no_dsa && misaligned && dependency && influence,
        // Conflicting human interests; needs neither misalignment nor dependency.
        loss_moloch: no_dsa && hlmi && moloch,
    }
}
