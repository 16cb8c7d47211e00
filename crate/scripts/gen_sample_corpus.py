#!/usr/bin/env python3
"""Regenerate the bundled 50-table sample corpus under data/sample_corpus/.

The output is fully determined by the seed below; re-running it rewrites the
same bytes. Tables cover time series, categorical summaries, grouped
measurements and purely numeric experiment logs, and a few of them carry
missing cells, duplicated columns and formatted numbers so the cleaning rules
have something to do.
"""

import csv
import math
import os
import random

SEED = 20240611
OUT = os.path.join(os.path.dirname(__file__), "..", "data", "sample_corpus")

REGIONS = ["North", "South", "East", "West", "Central", "Coastal", "Highland"]
PRODUCTS = ["Widgets", "Gadgets", "Gizmos", "Doohickeys", "Sprockets"]
CHANNELS = ["Online", "Retail", "Wholesale"]
COUNTRIES = [
    "Argentina", "Brazil", "Canada", "Denmark", "Egypt", "France", "Germany",
    "India", "Japan", "Kenya", "Mexico", "Norway", "Peru", "Spain", "Turkey",
    "Uganda", "Vietnam", "Chile", "Ghana", "Italy", "Jordan", "Nepal",
    "Oman", "Poland", "Qatar", "Rwanda", "Sweden", "Togo", "Ukraine",
    "Yemen", "Zambia", "Austria", "Belgium", "Cuba", "Fiji", "Greece",
    "Haiti", "Iceland", "Laos", "Malta",
]
GENRES = ["Drama", "Comedy", "Action", "Horror", "Documentary", "Animation"]
DEPARTMENTS = ["Sales", "Engineering", "Support", "Finance", "Legal", "HR"]
LEVELS = ["Junior", "Mid", "Senior", "Lead"]


def fmt(v, digits=2):
    return f"{v:.{digits}f}"


def months(start_year, n):
    out = []
    y, m = start_year, 1
    for _ in range(n):
        out.append(f"{y:04d}-{m:02d}")
        m += 1
        if m > 12:
            m, y = 1, y + 1
    return out


def days(start_year, n, step=7):
    import datetime as dt

    d0 = dt.date(start_year, 1, 1)
    return [(d0 + dt.timedelta(days=i * step)).isoformat() for i in range(n)]


def monthly_sales(rng, idx):
    n = rng.randint(12, 36)
    base = rng.uniform(50, 500)
    slope = rng.uniform(-3, 6)
    rows = []
    for i, m in enumerate(months(2015 + idx % 6, n)):
        sales = base + slope * i + rng.gauss(0, base * 0.05)
        rows.append([m, fmt(sales)])
    return ["month", "sales"], rows


def daily_metrics(rng, idx):
    n = rng.randint(20, 50)
    header = ["date", "visitors", "signups", "revenue"]
    rows = []
    v = rng.uniform(800, 2000)
    for i, d in enumerate(days(2019 + idx % 4, n)):
        v = max(10.0, v + rng.gauss(8, 40))
        s = v * rng.uniform(0.02, 0.06)
        r = s * rng.uniform(20, 40)
        rows.append([d, str(int(v)), str(int(s)), fmt(r)])
    if rng.random() < 0.5:
        rows[rng.randrange(n)][2] = ""
    return header, rows


def yearly_population(rng, idx):
    start = rng.randint(1960, 1990)
    n = rng.randint(15, 30)
    pop = rng.uniform(1e6, 5e7)
    growth = rng.uniform(-0.005, 0.03)
    rows = []
    for i in range(n):
        pop *= 1 + growth + rng.gauss(0, 0.003)
        rows.append([str(start + i), f"{int(pop):,}", fmt(rng.uniform(40, 85), 1)])
    return ["year", "population", "urban_pct"], rows


def regional_sales(rng, idx):
    header = ["region", "product", "units", "revenue"]
    regions = rng.sample(REGIONS, rng.randint(3, 6))
    products = rng.sample(PRODUCTS, rng.randint(2, 4))
    rows = []
    for r in regions:
        for p in products:
            units = rng.randint(20, 400)
            rows.append([r, p, str(units), fmt(units * rng.uniform(8, 15))])
    rng.shuffle(rows)
    return header, rows


def country_indicators(rng, idx):
    k = rng.randint(15, 40)
    header = ["country", "gdp_per_capita", "life_expectancy", "population_m"]
    rows = []
    for c in rng.sample(COUNTRIES, k):
        gdp = math.exp(rng.uniform(7, 11))
        life = 50 + 6 * math.log(gdp / 1000 + 1) + rng.gauss(0, 2)
        rows.append([c, fmt(gdp, 0), fmt(life, 1), fmt(rng.uniform(0.5, 200), 1)])
    return header, rows


def survey_shares(rng, idx):
    genres = rng.sample(GENRES, rng.randint(3, 6))
    header = ["genre", "share"]
    weights = [rng.uniform(1, 10) for _ in genres]
    total = sum(weights)
    rows = [[g, f"{100 * w / total:.1f}%"] for g, w in zip(genres, weights)]
    return header, rows


def experiment_log(rng, idx):
    n = rng.randint(25, 60)
    header = ["trial", "temperature", "pressure", "yield"]
    rows = []
    for i in range(n):
        t = rng.uniform(280, 360)
        p = rng.uniform(1, 5)
        y = 0.2 * t + 8 * p + rng.gauss(0, 4)
        if rng.random() < 0.04:
            y *= 2.5
        rows.append([str(i + 1), fmt(t, 1), fmt(p, 3), fmt(y)])
    return header, rows


def measurements(rng, idx):
    n = rng.randint(20, 60)
    header = ["height_cm", "weight_kg"]
    rows = []
    for _ in range(n):
        h = rng.gauss(170, 9)
        w = 0.9 * h - 85 + rng.gauss(0, 7)
        rows.append([fmt(h, 1), fmt(w, 1)])
    return header, rows


def salary_table(rng, idx):
    n = rng.randint(30, 60)
    depts = rng.sample(DEPARTMENTS, rng.randint(3, 5))
    header = ["employee", "department", "level", "salary", "salary_copy", "tenure_years"]
    rows = []
    for i in range(n):
        d = rng.choice(depts)
        lv = rng.choice(LEVELS)
        s = 40000 + LEVELS.index(lv) * 18000 + rng.gauss(0, 5000)
        salary = f"{int(s)}"
        rows.append([f"E{1000 + i}", d, lv, salary, salary, fmt(rng.uniform(0, 20), 1)])
    rows[rng.randrange(n)][5] = "NA"
    return header, rows


def channel_quarterly(rng, idx):
    header = ["quarter", "channel", "orders"]
    rows = []
    for y in range(2020, 2023):
        for q in range(1, 5):
            for ch in CHANNELS:
                rows.append([f"{y}-Q{q}", ch, str(rng.randint(100, 900))])
    return header, rows


def sensor_readings(rng, idx):
    n = rng.randint(6, 10)
    header = ["reading"]
    rows = [[fmt(rng.gauss(20, 2))] for _ in range(n)]
    return header, rows


GENERATORS = [
    monthly_sales,
    daily_metrics,
    yearly_population,
    regional_sales,
    country_indicators,
    survey_shares,
    experiment_log,
    measurements,
    salary_table,
    channel_quarterly,
    sensor_readings,
]


def main():
    rng = random.Random(SEED)
    os.makedirs(OUT, exist_ok=True)
    for name in os.listdir(OUT):
        if name.endswith(".csv"):
            os.remove(os.path.join(OUT, name))
    for i in range(50):
        gen = GENERATORS[i % len(GENERATORS)]
        header, rows = gen(rng, i)
        path = os.path.join(OUT, f"t{i:02d}_{gen.__name__}.csv")
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)


if __name__ == "__main__":
    main()
