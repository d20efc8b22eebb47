//! Shared fixtures for the kernel benchmarks.

use depthlab::scene::{render, stress_scene, RenderedScene, SceneSpec};

/// The stress scene at its default seed, plus its spec.
pub fn bench_scene() -> (SceneSpec, RenderedScene) {
    let (spec, _) = stress_scene();
    let scene = render(&spec, 7).expect("stress scene renders");
    (spec, scene)
}
