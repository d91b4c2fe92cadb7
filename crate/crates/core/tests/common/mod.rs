#![allow(dead_code)]

use telelink::config::LinkConfig;
use telelink::engine::{acquire, AcquisitionCounts, AcquisitionPlan, LinkModel};
use telelink::fiber::{ChannelTimeline, CompensationMode, CrosstalkConfig};
use telelink::rng::substream;
use telelink::tomography::NamedState;

/// Bright uncorrelated light on every channel and almost no pairs, so
/// nearly every coincidence is accidental.
pub fn accidental_config(width_ps: u64) -> LinkConfig {
    let mut cfg = LinkConfig::bundled("metro30km_traffic").unwrap();
    cfg.wcs.detected_rate = 2e7;
    cfg.wcs.ch1_fraction = 0.5;
    cfg.pair.pair_coincidence_rate = 1.0;
    cfg.crosstalk.background_rate_ch3 = 1.4e7;
    cfg.crosstalk.bandpass_suppression_db = 0.0;
    cfg.fiber.drift_rate = 0.0;
    cfg.window.width_ps = width_ps;
    cfg.validate().unwrap();
    cfg
}

/// Detected singles rates for a D-polarized WCS input.
pub fn singles(cfg: &LinkConfig) -> [f64; 3] {
    let d = &cfg.detectors;
    let c = cfg.pair.coincidence_rates();
    let wcs = cfg.wcs.reference_rates();
    [
        wcs[0] + cfg.pair.idler_rate_ch[0] + d.ch1.dark_rate,
        wcs[1] + cfg.pair.idler_rate_ch[1] + d.ch2.dark_rate,
        cfg.pair.signal_rate - c[0] - c[1] + d.ch3.dark_rate + cfg.crosstalk.effective_rate(),
    ]
}

/// One acquisition of `duration_s` on a drift-free fiber.
pub fn acquire_once(
    cfg: &LinkConfig,
    input: NamedState,
    basis: NamedState,
    duration_s: f64,
    seed: u64,
) -> AcquisitionCounts {
    let timeline = ChannelTimeline::build(
        &cfg.fiber,
        CompensationMode::Off,
        duration_s,
        1.0,
        &mut substream(seed, "fiber"),
    )
    .unwrap();
    let plan = AcquisitionPlan {
        input,
        basis,
        start_s: 0.0,
        duration_s,
    };
    acquire(&LinkModel::new(cfg).unwrap(), &timeline, &plan, seed, false)
        .unwrap()
        .0
}

/// Local link with every noise source removed: no darks, no background,
/// every idler and signal belongs to a pair. What is left are accidentals
/// between two pairs, a fraction of order pair rate / WCS rate, and between
/// two WCS photons around one pair, of order WCS rate × window.
pub fn noiseless_config(
    zeta: f64,
    pair_fidelity: f64,
    wcs_rate: f64,
    pair_rate: f64,
    acquisition_s: f64,
) -> LinkConfig {
    let mut cfg = LinkConfig::bundled("local").unwrap();
    cfg.acquisition_s = acquisition_s;
    cfg.wcs.detected_rate = wcs_rate;
    for d in [
        &mut cfg.detectors.ch1,
        &mut cfg.detectors.ch2,
        &mut cfg.detectors.ch3,
    ] {
        d.dark_rate = 0.0;
    }
    cfg.crosstalk = CrosstalkConfig::none();
    cfg.pair.pair_coincidence_rate = pair_rate;
    let c = cfg.pair.coincidence_rates();
    cfg.pair.idler_rate_ch = [2.0 * c[0], 2.0 * c[1]];
    cfg.pair.signal_rate = c[0] + c[1];
    cfg.pair.pair_fidelity = pair_fidelity;
    cfg.pair.overlap_at_zero_brightness = zeta;
    cfg.pair.brightness_visibility_slope = 0.0;
    cfg.check = None;
    cfg.validate().unwrap();
    cfg
}
