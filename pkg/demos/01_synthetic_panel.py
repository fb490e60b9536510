"""Generate a synthetic company panel and inspect its default structure.

The generator plants a logistic default signal in the yearly financials and
calibrates the intercept so the labeled default rate lands on the requested
imbalance. Everything is a deterministic function of the config.
"""

import pdxplain as px

# A imbalance ratio of 114.75 means about 0.86% of labeled company-years
# default the following year. 6000 companies keep this quick.
config = px.GeneratorConfig(
    n_companies=6000,
    year_range=(2004, 2018),
    imbalance_ratio=114.75,
    signal_strength=1.0,
    missing_rates={"total_employees": 0.1, "working_capital": 0.05},
    seed=7,
)

records, oracle = px.generate_with_oracle(config)
print(f"{len(records)} statements for {config.n_companies} companies")
print(f"target default rate   {oracle.target_rate:.4%}")
print(f"realized default rate {oracle.realized_rate:.4%}")
print(f"calibrated intercept  {oracle.intercept:+.3f}")

# Per-year volumes and default rates (the labeled rows are the year-t
# statements of companies that also filed at t+1).
print("\nyear  rated  defaults  rate")
for row in px.default_rate_report(records):
    print(f"{row['year']}  {row['count']:5d}  {row['defaults']:8d}  {row['rate']:.2%}")

# The generator also knows each labeled row's true next-year default
# propensity; quantile-binning it gives a stand-in reference rating stream.
grades = px.oracle_reference_grades(oracle)
counts = {g: 0 for g in px.GRADES}
for _, _, g in grades:
    counts[g] += 1
print("\nreference grade counts:", counts)

# Same seed, same bytes: the panel is fully reproducible.
again = px.generate(config)
assert len(again) == len(records)
assert all(a == b for a, b in zip(again[:50], records[:50]))
print("\nrerun with the same seed reproduces the panel exactly")
