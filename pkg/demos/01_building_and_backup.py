"""
A day in the simulated building.

Runs the two-state RC model for one day with the heater forced off and then
forced on, and shows how the minute-level backup controller keeps the room
inside 18-22 °C no matter what the agent asks for.
"""

import numpy as np

from thermoq.thermal_sim import (RcParams, SimState, generate_weather, simulate_schedule)

params = RcParams()
fast, slow = params.time_constants()
print(f"time constants: room {fast:.2f} h, thermal mass {slow:.1f} h")

weather = generate_weather(1, seed=3).values
print(f"outside temperature today: {weather.min():.1f} .. {weather.max():.1f} °C")

for name, action in (("always off", 0), ("always on", 1)):
    outs = simulate_schedule(SimState(20.0, 20.0), params, [action] * 24, weather)
    overridden = sum(o.minutes_overridden for o in outs)
    energy = sum(o.u_phys_avg for o in outs)
    lo = min(o.t_room_min for o in outs)
    hi = max(o.t_room_max for o in outs)
    print(f"{name:10s}: room stayed in [{lo:.2f}, {hi:.2f}] °C, "
          f"backup overrode {overridden} of 1440 minutes, energy {energy:.1f} kWh")

# a random schedule is just as safe
rng = np.random.default_rng(0)
outs = simulate_schedule(SimState(20.0, 20.0), params, rng.integers(0, 2, 24), weather)
print("random schedule, hourly room temperature:")
print(np.round([o.state.t_room for o in outs], 2))
