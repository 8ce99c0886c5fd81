import numpy as np
import pytest

import flocksim_rl
from flocksim_rl import (
    CameraDisabledError,
    ClosedHandleError,
    ShapeMismatchError,
    make,
)

from flocksim.bench import image_checksum
from flocksim.camera import render
from flocksim.config import ConfigError, load_config
from flocksim.control import AttitudeCommands, CommandBatch, VelocityCommands
from flocksim.world import OBS_DIM, World

BASE_YAML = """
version: 1
env:
  num_envs: {n}
  seed: {seed}
  control_mode: {mode}
  bounds: [10.0, 10.0, 5.0]
  episode_max_steps: 120
  wall_enabled: true
"""

CAM_YAML = """
camera:
  width: 24
  height: 16
"""


def write_cfg(tmp_path, n=4, seed=3, mode="velocity", camera=False):
    path = tmp_path / "sim.yaml"
    text = BASE_YAML.format(n=n, seed=seed, mode=mode)
    if camera:
        text += CAM_YAML
    path.write_text(text)
    return path


def native_commands(world, actions):
    """The documented denormalization, applied independently of the bindings."""
    a = np.clip(np.asarray(actions, dtype=np.float64), -1.0, 1.0)
    lim = world.limits
    if world.env.control_mode == "attitude":
        return CommandBatch.all_attitude(AttitudeCommands(
            roll=a[:, 0] * lim.max_tilt,
            pitch=a[:, 1] * lim.max_tilt,
            yaw_rate=a[:, 2] * lim.max_yaw_rate,
            thrust=(a[:, 3] + 1.0) / 2.0 * world.robot.thrust_max))
    return CommandBatch.all_velocity(VelocityCommands(
        v=a[:, 0:3] * lim.max_speed_cmd,
        yaw_rate=a[:, 3] * lim.max_yaw_rate))


class TestMake:
    def test_spaces_and_obs_dim(self, tmp_path):
        handle = make(write_cfg(tmp_path, n=4))
        assert handle.observation_space.shape == (4, 16)
        assert handle.observation_space.shape[1] == OBS_DIM
        assert handle.action_space.shape == (4, 4)
        assert handle.action_space.low == -1.0
        assert handle.observations().shape == (4, 16)

    def test_bad_path_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            make(tmp_path / "missing.yaml")

    def test_same_seed_same_reset(self, tmp_path):
        a = make(write_cfg(tmp_path, seed=9))
        b = make(write_cfg(tmp_path, seed=9))
        np.testing.assert_array_equal(a.observations(), b.observations())

    def test_context_manager_closes(self, tmp_path):
        with make(write_cfg(tmp_path)) as handle:
            handle.observations()
        with pytest.raises(ClosedHandleError):
            handle.observations()


class TestStep:
    def test_shape_mismatch(self, tmp_path):
        handle = make(write_cfg(tmp_path, n=4))
        with pytest.raises(ShapeMismatchError):
            handle.step(np.zeros((3, 4)))
        with pytest.raises(ShapeMismatchError):
            handle.step(np.zeros((4, 3)))

    def test_actions_clipped(self, tmp_path):
        h1 = make(write_cfg(tmp_path, seed=5))
        h2 = make(write_cfg(tmp_path, seed=5))
        big = np.full((4, 4), 7.0)
        one = np.ones((4, 4))
        obs1 = h1.step(big)[0]
        obs2 = h2.step(one)[0]
        np.testing.assert_array_equal(obs1, obs2)

    def test_step_after_close(self, tmp_path):
        handle = make(write_cfg(tmp_path))
        handle.close()
        with pytest.raises(ClosedHandleError):
            handle.step(np.zeros((4, 4)))

    @pytest.mark.parametrize("mode", ["velocity", "attitude"])
    def test_transparency_500_steps(self, tmp_path, mode):
        """[SECONDARY] acceptance: bound outputs equal native bitwise."""
        cfg_path = write_cfg(tmp_path, n=3, seed=17, mode=mode)
        handle = make(cfg_path)
        native = World.create(load_config(cfg_path))

        rng = np.random.default_rng(88)
        for k in range(500):
            actions = rng.uniform(-1.2, 1.2, (3, 4))
            obs_b, rew_b, term_b, trunc_b, info_b = handle.step(actions)
            res = native.step(native_commands(native, actions))
            assert np.array_equal(obs_b, res.observations), f"step {k}"
            assert np.array_equal(rew_b, res.reward)
            assert np.array_equal(term_b, res.terminated)
            assert np.array_equal(trunc_b, res.truncated)
            for key in res.info:
                assert np.array_equal(info_b[key], res.info[key])
        print("[PASS] bindings transparency (500 steps, bitwise, "
              f"{mode} mode)")

    def test_reset_matches_fresh_world_stream(self, tmp_path):
        cfg_path = write_cfg(tmp_path, n=2, seed=23)
        handle = make(cfg_path)
        native = World.create(load_config(cfg_path))
        obs_b = handle.reset()
        obs_n = native.reset_all()
        np.testing.assert_array_equal(obs_b, obs_n)


class TestRenderDepth:
    def test_disabled_camera(self, tmp_path):
        handle = make(write_cfg(tmp_path))
        with pytest.raises(CameraDisabledError):
            handle.render_depth()

    def test_matches_native_render(self, tmp_path):
        cfg_path = write_cfg(tmp_path, n=2, seed=7, camera=True)
        handle = make(cfg_path)
        native = World.create(load_config(cfg_path))
        img_b = handle.render_depth()
        img_n = render(native, native.camera)
        assert image_checksum(img_b.depth, img_b.segmentation) == \
            image_checksum(img_n.depth, img_n.segmentation)

    def test_empty_env_max_range(self, tmp_path):
        path = tmp_path / "free.yaml"
        path.write_text("""
env: {num_envs: 1, seed: 1}
camera: {width: 8, height: 6, max_range: 7.5}
""")
        handle = make(path)
        img = handle.render_depth()
        assert (img.depth == 7.5).all()
        assert (img.segmentation == 0).all()


class TestConcurrency:
    def test_step_in_flight_enforced(self, tmp_path):
        handle = make(write_cfg(tmp_path))
        assert handle._step_lock.acquire(blocking=False)
        try:
            with pytest.raises(flocksim_rl.ConcurrentStepError):
                handle.step(np.zeros((4, 4)))
        finally:
            handle._step_lock.release()
        handle.step(np.zeros((4, 4)))


class TestVersionPin:
    def test_schema_version_checked(self, tmp_path, monkeypatch):
        import flocksim

        monkeypatch.setattr(flocksim, "CONFIG_VERSION", 2)
        with pytest.raises(RuntimeError, match="schema"):
            make(write_cfg(tmp_path))
