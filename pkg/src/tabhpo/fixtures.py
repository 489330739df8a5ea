"""Synthetic desk-scale datasets used by tests, scripts and the CLI."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .dataset import Dataset
from .rng import derive_rng


def epsilon_mini(n_rows: int = 2000, n_cols: int = 500, margin: float = 1.0, seed: int = 0,
                 latent_dim: int = 50, noise: float = 0.05) -> Dataset:
    """Two balanced Gaussian classes separated along one oblique direction.

    A ``latent_dim`` standard Gaussian cloud is split by a random hyperplane
    and each half is pushed away from it by ``margin / 2``, leaving an empty
    slab of width ``margin``.  The cloud is embedded in ``n_cols`` columns by
    a random linear map with small isotropic noise, so the classes are
    linearly (but not axis-) separable.
    """
    rng = derive_rng(seed, "epsilon-mini")
    y = np.zeros(n_rows, dtype=np.int64)
    y[n_rows // 2:] = 1
    y = rng.permutation(y)
    u = rng.normal(size=latent_dim)
    u /= np.linalg.norm(u)
    Z = rng.normal(size=(n_rows, latent_dim))
    t = Z @ u
    side = np.where(y == 1, 1.0, -1.0)
    Z += np.outer(side * (np.abs(t) + margin / 2.0) - t, u)
    A = rng.normal(size=(latent_dim, n_cols)) / np.sqrt(latent_dim)
    X = Z @ A + noise * rng.normal(size=(n_rows, n_cols))
    return Dataset(X, y, feature_names=[f"f{i}" for i in range(n_cols)])


def labelled_rows(n_rows: int = 10_000, proportions=(0.6, 0.4), seed: int = 0, n_cols: int = 4) -> Dataset:
    """Random features with labels drawn in the given class proportions (exact counts up to rounding)."""
    rng = derive_rng(seed, "labelled-rows")
    counts = np.floor(np.asarray(proportions) * n_rows).astype(int)
    counts[0] += n_rows - counts.sum()
    y = rng.permutation(np.repeat(np.arange(len(counts)), counts))
    return Dataset(rng.normal(size=(n_rows, n_cols)), y)


# reviews ---------------------------------------------------------------------

_OPENERS = ["El hotel", "La comida", "El servicio", "El cuarto", "La playa", "El mesero", "La alberca", "El restaurante"]
_POS = ["esta chido", "muy padre", "excelente", "bien rico", "de lujo", "me late", "vale la pena"]
_NEG = ["no fue bueno", "muy chafa", "nunca volvemos", "un asco", "muy canon llegar", "jamás regreso", "no me gusto"]
_EMOJI_POS = ["👍", "❤️", "😍", "🔥", "😂", "👏", "🎉", "⭐"]
_EMOJI_NEG = ["👎", "😡", "😢", "💩", "😞", "🤮"]
_NOISE = ["  ", "!!", "...", " https://resenas.mx/p/{i} ", " www.viaje{i}.com ", " <b>ojo</b> ", " <br>",
          " info{i}@correo.mx ", " cafÃ© ", " ＷＯＷ ", " :) ", " é "]


def reviews_table(n_rows: int = 500, seed: int = 0) -> pd.DataFrame:
    """Spanish-style reviews with emoji, URLs, e-mails, markup, mojibake and idioms."""
    rng = derive_rng(seed, "reviews")
    rows = []
    for i in range(n_rows):
        pos = bool(rng.random() < 0.6)
        parts = [_OPENERS[rng.integers(len(_OPENERS))]]
        parts.append((_POS if pos else _NEG)[rng.integers(7)])
        if rng.random() < 0.5:
            parts.append((_EMOJI_POS if pos else _EMOJI_NEG)[rng.integers(6)])
        for _ in range(int(rng.integers(0, 3))):
            parts.append(_NOISE[rng.integers(len(_NOISE))].format(i=i))
        text = " ".join(parts)
        rating = int(rng.integers(4, 6)) if pos else int(rng.integers(1, 3))
        kind = ("Hotel", "Restaurante", "Atractivo")[int(rng.integers(3))]
        rows.append({"review_id": i, "review": text, "polarity": rating, "type": kind})
    return pd.DataFrame(rows)


# movies ----------------------------------------------------------------------

GENRES = ("Action", "Adventure", "Animation", "Biography", "Comedy", "Crime", "Documentary", "Drama",
          "Family", "Fantasy", "Film-Noir", "History", "Horror", "Music", "Musical", "Mystery", "News",
          "Reality-TV", "Romance", "Sci-Fi", "Sport", "Thriller", "War", "Western", "Adult")


def movies_table(n_rows: int = 1000, seed: int = 0, n_people: int = 300, n_companies: int = 400) -> pd.DataFrame:
    """Movie metadata whose rating depends on genres, company, cast quality and runtime."""
    rng = derive_rng(seed, "movies")
    people = [f"Person {i:03d}" for i in range(n_people)]
    talent = rng.normal(0, 0.8, size=n_people)
    companies = [f"Studio {i:03d}" for i in range(n_companies)]
    # Zipf-like company popularity so some categories are frequent and most are rare
    cp = 1.0 / np.arange(1, n_companies + 1)
    cp /= cp.sum()
    comp_effect = rng.normal(0, 0.6, size=n_companies)
    genre_effect = rng.normal(0, 0.3, size=len(GENRES))
    countries = ["USA", "UK", "France", "India", "Mexico", "Japan", "Spain", "Italy"]
    rows = []
    for i in range(n_rows):
        k = int(rng.integers(1, 4))
        g = sorted(rng.choice(len(GENRES), size=k, replace=False).tolist())
        cast = rng.choice(n_people, size=int(rng.integers(2, 6)), replace=False)
        c = int(rng.choice(n_companies, p=cp))
        duration = float(rng.integers(75, 180))
        votes = float(rng.lognormal(8, 1.5))
        score = (6.0 + genre_effect[g].mean() + comp_effect[c] + talent[cast].mean()
                 + 0.004 * (duration - 110) + 0.05 * np.log1p(votes) + rng.normal(0, 0.4))
        avg = float(np.clip(score, 1.0, 10.0))
        rows.append({
            "imdb_title_id": f"tt{i:07d}",
            "title": f"Movie {i}",
            "original_title": f"Movie {i}",
            "year": int(rng.integers(1950, 2021)),
            "date_published": f"{int(rng.integers(1950, 2021))}-01-01",
            "genre": ", ".join(GENRES[j] for j in g),
            "duration": duration,
            "country": countries[int(rng.integers(len(countries)))],
            "production_company": companies[c],
            "director": people[int(rng.integers(n_people))],
            "actors": ", ".join(people[j] for j in cast),
            "votes": votes,
            "budget": float(rng.lognormal(16, 1)),
            "gross_income": float(np.exp(avg) * rng.lognormal(10, 0.5)),
            "metascore": float(np.clip(avg * 10 + rng.normal(0, 5), 0, 100)),
            "reviews_user": float(votes / 50 * rng.lognormal(0, 0.3)),
            "reviews_critic": float(votes / 200 * rng.lognormal(0, 0.3)),
            "avg_vote": round(avg, 1),
        })
    return pd.DataFrame(rows)


def credit_graph() -> pd.DataFrame:
    """A 20-row cast/rating table; the last 4 rows act as a test split with unseen people."""
    cast = [
        "Ana, Luis", "Luis", "Marta, Ana, Pedro", "Pedro", "Ana", "Sofia, Luis", "Marta", "Pedro, Sofia",
        "Ana, Marta", "Luis, Pedro", "Sofia", "Jorge, Ana", "Jorge", "Marta, Jorge", "Luis, Sofia, Jorge",
        "Ana, Pedro",
        "Ana, Nadie", "Zoe", "", "Luis, Marta, Zoe",
    ]
    rating = [7.0, 6.5, 8.0, 5.5, 7.5, 6.0, 8.5, 5.0, 7.8, 6.2, 6.8, 7.1, 4.9, 7.7, 6.6, 6.4,
              9.0, 3.0, 5.0, 7.0]
    split = ["train"] * 16 + ["test"] * 4
    return pd.DataFrame({"movie": [f"m{i:02d}" for i in range(20)], "actors": cast, "rating": rating, "split": split})


def write_svmlight(path, X, y) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row, label in zip(X, y):
            nz = np.flatnonzero(row)
            feats = " ".join(f"{j + 1}:{row[j]:.17g}" for j in nz)
            fh.write(f"{'+1' if label == 1 else '-1' if label == 0 else label}{' ' + feats if feats else ''}\n")
