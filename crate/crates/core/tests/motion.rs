use dynamap_core::geometry::Intrinsics;
use dynamap_core::image::Image;
use dynamap_core::motion::{binary_motion_mask, motion_segments, MotionParams};
use dynamap_core::segmentation::{compute_edge_mask, segment_frame, SegmentationParams};
use dynamap_core::synthetic::{render_frame, render_view, BoxSpec, MoverSpec, SceneSpec};
use dynamap_core::tracking::{track, ReferenceFrame, TrackingParams};
use dynamap_core::{DepthRange, Frame, Mask};

fn background_only(spec: &SceneSpec) -> SceneSpec {
    SceneSpec { movers: Vec::new(), ..spec.clone() }
}

/// Binary motion mask of `current` against the background rendered at `ref_frame`.
fn motion_against_background(spec: &SceneSpec, ref_frame: usize, current: &Frame) -> Mask {
    let k = spec.intrinsics;
    let bg = background_only(spec);
    let ref_pose = spec.camera_pose(ref_frame);
    let reference = ReferenceFrame::from_frame(&render_view(&bg, ref_frame, &ref_pose).to_frame(&k), &k, ref_pose);
    let r = track(&reference, current, &ref_pose, None, &TrackingParams::default());
    assert!(r.converged);
    binary_motion_mask(&r.residual_map, &current.valid_mask, &MotionParams::default()).bits
}

#[test]
fn moving_box_is_marked_and_background_is_not() {
    let spec = SceneSpec::preset("two_body", 100).unwrap();
    let k = spec.intrinsics;
    for f in [30, 50, 70, 90] {
        let sf = render_frame(&spec, f);
        let cur = sf.to_frame(&k);
        let bits = motion_against_background(&spec, f - 1, &cur);
        let (mut obj, mut obj_hit, mut bg, mut bg_hit) = (0, 0, 0, 0);
        for v in 0..k.height {
            for u in 0..k.width {
                if !cur.valid_mask[(u, v)] {
                    continue;
                }
                if sf.labels[(u, v)] > 0 {
                    obj += 1;
                    obj_hit += bits[(u, v)] as usize;
                } else {
                    bg += 1;
                    bg_hit += bits[(u, v)] as usize;
                }
            }
        }
        assert!(obj > 500, "frame {f}: box barely visible ({obj} px)");
        assert!(obj_hit as f64 >= 0.5 * obj as f64, "frame {f}: {obj_hit}/{obj} box pixels");
        assert!(bg_hit as f64 <= 0.05 * bg as f64, "frame {f}: {bg_hit}/{bg} background pixels");
    }
}

fn centroid_u(m: &Mask) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in 0..m.height() {
        for u in 0..m.width() {
            if m[(u, v)] {
                s += u as f64;
                n += 1;
            }
        }
    }
    assert!(n > 0);
    s / n as f64
}

#[test]
fn mask_centroid_follows_a_translating_box() {
    let mut spec = SceneSpec::preset("plane", 12).unwrap();
    let z_front = 1.98;
    spec.movers.push(MoverSpec {
        class_id: 28,
        class_name: "suitcase".into(),
        body: BoxSpec { center: [-0.25, 0.3, z_front + 0.02], half_extents: [0.15, 0.15, 0.02], yaw: 0.0, color: [200.0, 60.0, 60.0] },
        velocity: [0.01, 0.0, 0.0],
        yaw_rate: 0.0,
        start_frame: 0,
    });
    let k = spec.intrinsics;
    let at = |f: usize| {
        let cur = render_frame(&spec, f).to_frame(&k);
        centroid_u(&motion_against_background(&spec, f, &cur))
    };
    let frames = 10;
    let advance = at(frames) - at(0);
    let expected = frames as f64 * k.fx * 0.01 / z_front;
    assert!((advance - expected).abs() < 1.0, "advanced {advance:.2} px, expected {expected:.2} px");
}

/// Depth discontinuities bleed by one pixel: every edge pixel takes the
/// farthest of its four neighbours' depths.
fn bleed_edges(frame: &Frame, k: &Intrinsics) -> Frame {
    let edges = compute_edge_mask(frame, 0.01, 20f64.to_radians());
    let d = &frame.depth;
    let (w, h) = d.dims();
    let depth = Image::from_fn(w, h, |u, v| {
        if !edges.bits[(u, v)] || u == 0 || v == 0 || u + 1 == w || v + 1 == h {
            return d[(u, v)];
        }
        [d[(u - 1, v)], d[(u + 1, v)], d[(u, v - 1)], d[(u, v + 1)], d[(u, v)]]
            .into_iter()
            .fold(0.0, f64::max)
    });
    Frame::new(frame.timestamp, frame.rgb.clone(), depth, k, DepthRange::default()).unwrap()
}

#[test]
fn edge_noise_in_a_static_scene_marks_no_segment() {
    let spec = SceneSpec::preset("static", 10).unwrap();
    let k = spec.intrinsics;
    let pose = spec.camera_pose(5);
    let clean = render_frame(&spec, 5).to_frame(&k);
    let noisy = bleed_edges(&clean, &k);
    let reference = ReferenceFrame::from_frame(&clean, &k, pose);
    let r = track(&reference, &noisy, &pose, None, &TrackingParams::default());
    let binary = binary_motion_mask(&r.residual_map, &noisy.valid_mask, &MotionParams::default());

    let edges = compute_edge_mask(&clean, 0.01, 20f64.to_radians()).bits;
    let near_edge = Mask::from_fn(k.width, k.height, |u, v| {
        (v.saturating_sub(2)..=(v + 2).min(k.height - 1))
            .any(|y| (u.saturating_sub(2)..=(u + 2).min(k.width - 1)).any(|x| edges[(x, y)]))
    });
    for v in 0..k.height {
        for u in 0..k.width {
            assert!(!binary.bits[(u, v)] || near_edge[(u, v)], "spurious pixel ({u}, {v}) away from edges");
        }
    }
    let (_, segments) = segment_frame(&noisy, &SegmentationParams::default());
    let marked = motion_segments(&binary.bits, &segments, MotionParams::default().overlap_threshold);
    assert_eq!(marked.bits.count(), 0, "segments {:?}", marked.labels);
}
