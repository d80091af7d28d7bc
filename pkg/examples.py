"""Examples demonstrating the usage of the uav-wteg library.

Each example loads the shipped baseline scenario, runs one stage of the pipeline
and prints what it produced: navigation, predicted topology, scheduling and a
small experiment.
"""

from uav_wteg import BpsoParams, Strategy, bpso_solve, dead_reckon, load_scenario, solve
from uav_wteg.errors import NoFeasibleSchedule
from uav_wteg.experiments import run_experiment
from uav_wteg.sins import ImuErrorModel, position_errors, simulate_imu
from uav_wteg.trajectory import survey_track


def example_navigation():
    """Dead reckoning along the survey track with calibrated sensors."""
    print("\n=== Navigation Examples ===")

    track = survey_track()
    trace = simulate_imu(track, ImuErrorModel.calibrated(seed=1), 0.05, 120.0)
    states = dead_reckon(track.state(0.0), trace, track.earth)
    errors = position_errors(states, track)
    print(f"Epochs: {len(states)}")
    print(f"Position error after 60 s: {errors[len(errors) // 2]:.2f} m")
    print(f"Position error after 120 s: {errors[-1]:.2f} m")


def example_topology():
    """Predicted slot topologies of the baseline fleet."""
    print("\n=== Topology Examples ===")

    scenario = load_scenario("baseline")
    g1, g2 = scenario.topologies(scenario.predicted_positions())
    for g in (g1, g2):
        print(f"Slot {g.k}: {int(g.links.sum()) // 2} links")
    print(g1.to_frame().head())


def example_scheduling():
    """One task scheduled by each strategy on the predicted graph."""
    print("\n=== Scheduling Examples ===")

    scenario = load_scenario("baseline")
    problem = scenario.problem(scenario.wteg(scenario.predicted_positions()))
    print(f"Task: {len(problem.order)} subtasks on {problem.n} UAVs")

    result = bpso_solve(problem, BpsoParams(swarm_size=50, iterations=30, seed=scenario.seed))
    print(f"BPSO: T(X) = {result.latency:.4f} s ({result.evaluations} schedules)")
    for t in result.evaluation.timings:
        print(f"  {t.subtask}: u{t.placement.uav}, done at {t.finish:.4f} s")

    for strategy in (Strategy.WRR, Strategy.GREEDY_LB, Strategy.CLOUD, Strategy.LOCAL):
        try:
            other = solve(strategy, problem, cloud=scenario.cloud, seed=scenario.seed)
        except NoFeasibleSchedule as e:
            print(f"{strategy.value}: {e}")
            continue
        print(f"{strategy.value}: T(X) = {other.latency:.4f} s")


def example_experiment():
    """Latency against computation complexity."""
    print("\n=== Experiment Examples ===")

    scenario = load_scenario("baseline").with_bpso(swarm_size=30, iterations=20)
    result = run_experiment("complexity", scenario)
    print(result.to_frame().head(10).to_string(index=False))


if __name__ == "__main__":
    example_navigation()
    example_topology()
    example_scheduling()
    example_experiment()
