"""Deterministic desk-scale corpus: 20 topics, three registers, hidden truth.

Each topic owns three disjoint vocabularies (formal, informal slang, implicit
periphrasis). Texts are built from the topic vocabulary plus shared filler
words, so relevance is learnable but never leaks across topics. The hidden
truth maps every generated text to its topic (chatter texts map to nothing),
which is what the deterministic mock providers answer from.

A topic's keyword blocklist is its description content words plus its formal
and informal vocabulary; implicit texts draw only on the implicit vocabulary,
so they express the topic without any blocklisted keyword.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import (
    LabelSource,
    PairExample,
    Register,
    Split,
    TextSample,
    TopicContext,
    normalize_text,
)
from .labeling import LabelCache, MockLabelProvider, label_candidate_pairs
from .pairgen import NegativeBudget, build_candidate_pairs, derive_seed, topic_similarity
from .synthgen import (
    GenerationSpec,
    KeywordBlocklist,
    MockGenerationProvider,
    Polarity,
    generate_hard_negatives,
    generate_implicit,
    keyword_leak_check,
)

# (id, description, domain, formal vocab, informal vocab, implicit vocab)
TOPICS: list[tuple[str, str, str, list[str], list[str], list[str]]] = [
    ("fuel-prices", "Fuel prices", "Energy",
     ["pertamina", "pertalite", "bbm", "liter"],
     ["bensin", "spbu", "dompet", "tipis"],
     ["tank", "cicilan", "ngisi", "irit"]),
    ("oil-prices", "Oil prices", "Energy",
     ["opec", "minyak", "produksi", "barel"],
     ["kilang", "impor", "tanker", "migas"],
     ["anjungan", "offshore", "sumur", "rig"]),
    ("monetary-policy", "Monetary policy", "Economics & Finance",
     ["bi", "suku", "bunga", "acuan"],
     ["kredit", "deposito", "bankir", "moneter"],
     ["kpr", "angsuran", "tabungan", "tenor"]),
    ("food-prices", "Food prices", "Economics & Finance",
     ["pangan", "beras", "sembako", "komoditas"],
     ["cabai", "bawang", "warung", "minyakgoreng"],
     ["sekilo", "100rb", "indomie", "belanja"]),
    ("tech-layoffs", "Tech layoffs", "Industry & Business",
     ["phk", "karyawan", "startup", "efisiensi"],
     ["layoff", "tokped", "kantor", "divisi"],
     ["nganggur", "cv", "loker", "pesangon"]),
    ("corruption", "Corruption", "Law & Crime",
     ["korupsi", "kpk", "suap", "gratifikasi"],
     ["koruptor", "disunat", "ott", "markup"],
     ["amplop", "pelicin", "setoran", "oknum"]),
    ("crypto", "Crypto", "Digital & Technology",
     ["bitcoin", "kripto", "blockchain", "aset"],
     ["wallet", "exchange", "altcoin", "binance"],
     ["rug", "pull", "hodl", "defi"]),
    ("elections", "Elections", "Politics & Governance",
     ["pemilu", "kpu", "capres", "suara"],
     ["nyoblos", "kampanye", "paslon", "tps"],
     ["baliho", "fajar", "jari", "tinta"]),
    ("gambling", "Online gambling", "Law & Crime",
     ["judi", "slot", "taruhan", "bandar"],
     ["gacor", "maxwin", "depo", "wd"],
     ["scatter", "spin", "saldo", "petir"]),
    ("floods", "Floods and disasters", "Environment & Disasters",
     ["banjir", "bencana", "evakuasi", "bmkg"],
     ["kebanjiran", "ngungsi", "surut", "genangan"],
     ["perahu", "karung", "atap", "lumpur"]),
    ("outbreaks", "Disease outbreaks", "Health",
     ["wabah", "virus", "vaksin", "pandemi"],
     ["masker", "swab", "isoman", "booster"],
     ["demam", "batuk", "hazmat", "oksigen"]),
    ("education", "Education reform", "Social & Community Issues",
     ["kurikulum", "sekolah", "pendidikan", "ujian"],
     ["zonasi", "ppdb", "skripsi", "sbmptn"],
     ["seragam", "pr", "rapot", "wisuda"]),
    ("minimum-wage", "Minimum wage", "Industry & Business",
     ["umr", "upah", "buruh", "serikat"],
     ["gaji", "lembur", "slip", "potongan"],
     ["gajian", "ngepas", "nombok", "receh"]),
    ("public-transport", "Public transportation", "Infrastructure & Transportation",
     ["transjakarta", "mrt", "krl", "tarif"],
     ["busway", "gerbong", "transit", "halte"],
     ["kejepit", "berdesakan", "peron", "stasiun"]),
    ("housing", "Housing market", "Economics & Finance",
     ["properti", "perumahan", "developer", "hunian"],
     ["kontrakan", "kos", "dp", "sertifikat"],
     ["ngontrak", "pindahan", "kardus", "gusur"]),
    ("football", "Football league", "Sports",
     ["liga", "timnas", "pssi", "stadion"],
     ["bola", "gol", "wasit", "suporter"],
     ["nobar", "jersey", "kiper", "derby"]),
    ("tourism", "Tourism recovery", "Industry & Business",
     ["wisata", "turis", "pariwisata", "destinasi"],
     ["liburan", "pantai", "tiket", "hotel"],
     ["koper", "sunscreen", "oleholeh", "staycation"]),
    ("data-breaches", "Data breaches", "Digital & Technology",
     ["peretasan", "kebocoran", "siber", "enkripsi"],
     ["hacker", "dibobol", "phishing", "otp"],
     ["password", "akun", "sandi", "spam"]),
    ("waste", "Waste management", "Environment & Disasters",
     ["sampah", "limbah", "daur", "tpa"],
     ["plastik", "kresek", "botol", "organik"],
     ["tong", "kompos", "pemulung", "keranjang"]),
    ("religious-holidays", "Religious holidays", "Religion & Culture",
     ["idul", "ramadan", "lebaran", "takbir"],
     ["mudik", "puasa", "sahur", "ketupat"],
     ["opor", "silaturahmi", "kampung", "takjil"]),
]

FORMAL_FILLERS = [
    "pemerintah", "resmi", "umumkan", "laporan", "data", "nasional", "kebijakan",
    "tahun", "naik", "turun", "melonjak", "pangkas", "tahan", "kata", "menteri",
    "hari", "ini", "soal", "terbaru",
]
INFORMAL_FILLERS = [
    "gila", "banget", "nih", "makin", "lagi", "parah", "duh", "wkwk", "kena",
    "temen", "gw", "di", "semua", "udah", "deh", "ya", "kok", "beneran",
]
IMPLICIT_FILLERS = [
    "sekarang", "dulu", "cuma", "tiap", "minggu", "jadi", "mikir", "baru",
    "aja", "kayak", "bayar", "rugi", "sampe", "terus", "akhirnya",
]
CHATTER_VOCAB = [
    "makan", "siang", "laper", "ngopi", "nonton", "drakor", "gabut", "mager",
    "senin", "promo", "shopee", "diskon", "checkout", "main", "mobile",
    "legends", "rank", "mythic", "playlist", "galau",
]

REGISTER_FILLERS = {
    Register.FORMAL: FORMAL_FILLERS,
    Register.INFORMAL: INFORMAL_FILLERS,
    Register.IMPLICIT_SYNTHETIC: IMPLICIT_FILLERS,
}


@dataclass
class ToyCorpus:
    contexts: list[TopicContext]
    texts: list[TextSample]
    topic_of_text: dict[str, str]
    chatter_ids: list[str]
    truth_topic_by_text: dict[str, str | None]
    topic_by_context: dict[str, str]
    blocklists: dict[str, KeywordBlocklist]
    implicit_pools: dict[str, list[str]] = field(default_factory=dict)
    hard_negative_pools: dict[str, list[str]] = field(default_factory=dict)
    leak_terms: dict[str, list[str]] = field(default_factory=dict)

    def mock_label_provider(self) -> MockLabelProvider:
        return MockLabelProvider.from_truth_table(self.topic_by_context, self.truth_topic_by_text)

    def mock_generation_provider(self, leak_rate: float = 0.0) -> MockGenerationProvider:
        pools: dict[tuple[str, Polarity], list[str]] = {}
        for topic_id, pool in self.implicit_pools.items():
            pools[(topic_id, Polarity.IMPLICIT_POSITIVE)] = pool
        for topic_id, pool in self.hard_negative_pools.items():
            pools[(topic_id, Polarity.HARD_NEGATIVE)] = pool
        return MockGenerationProvider(
            pools, leak_terms=self.leak_terms, leak_rate=leak_rate
        )


def _check_vocab_disjoint() -> None:
    seen: dict[str, str] = {}
    for topic_id, _, _, formal, informal, implicit in TOPICS:
        for token in [*formal, *informal, *implicit]:
            if token in seen:
                raise ValueError(
                    f"toy vocab token {token!r} belongs to both {seen[token]} and {topic_id}"
                )
            seen[token] = topic_id
    fillers = set(FORMAL_FILLERS) | set(INFORMAL_FILLERS) | set(IMPLICIT_FILLERS) | set(
        CHATTER_VOCAB
    )
    overlap = fillers & set(seen)
    if overlap:
        raise ValueError(f"filler words collide with topic vocab: {sorted(overlap)}")


def _compose(rng: random.Random, vocab: list[str], fillers: list[str], seen: set[str]) -> str:
    for attempt in range(50):
        n_vocab = rng.randint(2, 3)
        n_fill = rng.randint(2, 4)
        words = rng.sample(vocab, n_vocab) + rng.sample(fillers, n_fill)
        rng.shuffle(words)
        text = " ".join(words)
        if attempt > 30:  # salt rare collisions away deterministically
            text = f"{text} {rng.randint(10, 99)}"
        if text not in seen:
            seen.add(text)
            return text
    raise RuntimeError("could not compose a fresh toy text; vocab too small")


def generate_toy_corpus(
    seed: int = 7,
    formal_per_topic: int = 14,
    informal_per_topic: int = 10,
    implicit_pool_size: int = 14,
    hard_negative_pool_size: int = 6,
    chatter_count: int = 16,
) -> ToyCorpus:
    """Build the full toy corpus deterministically from a seed."""
    _check_vocab_disjoint()
    rng = random.Random(derive_seed(seed, "toy-corpus"))
    seen: set[str] = set()

    contexts = [
        TopicContext(id=topic_id, description=description, domain=domain)
        for topic_id, description, domain, *_ in TOPICS
    ]
    topic_by_context = {normalize_text(c.description): c.id for c in contexts}

    texts: list[TextSample] = []
    topic_of_text: dict[str, str] = {}
    truth: dict[str, str | None] = {}
    blocklists: dict[str, KeywordBlocklist] = {}
    implicit_pools: dict[str, list[str]] = {}
    hard_negative_pools: dict[str, list[str]] = {}
    leak_terms: dict[str, list[str]] = {}

    for topic_id, description, _, formal, informal, _ in TOPICS:
        blocklists[topic_id] = KeywordBlocklist.from_keywords(
            topic_id, [*normalize_text(description).split(), *formal, *informal]
        )
        leak_terms[topic_id] = list(formal)

    for index, (topic_id, _, _, formal, informal, implicit) in enumerate(TOPICS):
        for i in range(formal_per_topic):
            text = _compose(rng, formal, FORMAL_FILLERS, seen)
            sample = TextSample(
                id=f"{topic_id}-formal-{i:03d}",
                text=text,
                register=Register.FORMAL,
                stage=1,
                source="toy:news-titles",
            )
            texts.append(sample)
            topic_of_text[sample.id] = topic_id
            truth[normalize_text(text)] = topic_id
        for i in range(informal_per_topic):
            text = _compose(rng, informal, INFORMAL_FILLERS, seen)
            sample = TextSample(
                id=f"{topic_id}-informal-{i:03d}",
                text=text,
                register=Register.INFORMAL,
                stage=2,
                source="toy:social-posts",
            )
            texts.append(sample)
            topic_of_text[sample.id] = topic_id
            truth[normalize_text(text)] = topic_id

        pool = []
        for _ in range(implicit_pool_size):
            text = _compose(rng, implicit, IMPLICIT_FILLERS, seen)
            report = keyword_leak_check(text, blocklists[topic_id])
            if not report.passed:  # unreachable by construction; guard the invariant
                raise ValueError(f"toy implicit text leaks keywords: {report.matched}")
            pool.append(text)
            truth[normalize_text(text)] = topic_id
        implicit_pools[topic_id] = pool

        # Hard negatives mimic the *next* topic's implicit style: superficially
        # plausible, genuinely about something else.
        partner = TOPICS[(index + 1) % len(TOPICS)]
        partner_id, _, _, _, _, partner_implicit = partner
        pool = []
        for _ in range(hard_negative_pool_size):
            text = _compose(rng, partner_implicit, IMPLICIT_FILLERS, seen)
            pool.append(text)
            truth[normalize_text(text)] = partner_id
        hard_negative_pools[topic_id] = pool

    chatter_ids = []
    for i in range(chatter_count):
        text = _compose(rng, CHATTER_VOCAB, INFORMAL_FILLERS, seen)
        sample = TextSample(
            id=f"chatter-{i:03d}",
            text=text,
            register=Register.INFORMAL,
            stage=2,
            source="toy:chatter",
        )
        texts.append(sample)
        chatter_ids.append(sample.id)
        truth[normalize_text(text)] = None

    return ToyCorpus(
        contexts=contexts,
        texts=texts,
        topic_of_text=topic_of_text,
        chatter_ids=chatter_ids,
        truth_topic_by_text=truth,
        topic_by_context=topic_by_context,
        blocklists=blocklists,
        implicit_pools=implicit_pools,
        hard_negative_pools=hard_negative_pools,
        leak_terms=leak_terms,
    )


def chatter_pairs(corpus: ToyCorpus, seed: int, contexts_per_text: int = 2) -> list[PairExample]:
    """Pair each chatter text with a few contexts; all are unlabeled candidates."""
    texts_by_id = {t.id: t for t in corpus.texts}
    context_ids = [c.id for c in corpus.contexts]
    pairs = []
    for text_id in corpus.chatter_ids:
        rng = random.Random(derive_seed(seed, f"chatter:{text_id}"))
        for context_id in rng.sample(context_ids, contexts_per_text):
            pairs.append(
                PairExample(
                    context_id=context_id,
                    text_id=text_id,
                    label=None,
                    stage=texts_by_id[text_id].stage,
                    split=Split.UNASSIGNED,
                    label_source=LabelSource.PENDING,
                )
            )
    return pairs


@dataclass
class ToyDataset:
    """Fully labeled desk-scale dataset: all texts (stage 3 included) and pairs."""

    corpus: ToyCorpus
    texts: list[TextSample]
    pairs: list[PairExample]
    rejected_generations: int

    @property
    def contexts_by_id(self) -> dict[str, TopicContext]:
        return {c.id: c for c in self.corpus.contexts}

    @property
    def texts_by_id(self) -> dict[str, TextSample]:
        return {t.id: t for t in self.texts}


def build_toy_dataset(
    corpus: ToyCorpus | None = None,
    seed: int = 7,
    stage1_budget: NegativeBudget = NegativeBudget(negatives_per_text=3),
    stage2_budget: NegativeBudget = NegativeBudget(negatives_per_text=2),
    implicit_per_topic: int = 12,
    hard_negatives_per_topic: int = 4,
    leak_rate: float = 0.2,
    parallelism: int = 4,
    cache: LabelCache | None = None,
) -> ToyDataset:
    """Run the three construction stages end to end with the mock providers.

    Stage 1/2 candidates are labeled through the mock oracle (with caching and
    bounded parallelism, same code path as a real provider); stage 3 comes from
    constrained generation against the per-topic blocklists.
    """
    corpus = corpus or generate_toy_corpus(seed=seed)
    cache = cache or LabelCache(None)
    contexts_by_id = {c.id: c for c in corpus.contexts}
    texts_by_id = {t.id: t for t in corpus.texts}
    matrix = topic_similarity(corpus.contexts)

    stage1_texts = [t for t in corpus.texts if t.stage == 1]
    stage2_texts = [
        t for t in corpus.texts if t.stage == 2 and t.id not in set(corpus.chatter_ids)
    ]
    candidates = build_candidate_pairs(
        stage1_texts, corpus.topic_of_text, matrix, stage1_budget, seed
    )
    candidates += build_candidate_pairs(
        stage2_texts, corpus.topic_of_text, matrix, stage2_budget, seed
    )
    candidates += chatter_pairs(corpus, seed)

    provider = corpus.mock_label_provider()
    labeled = label_candidate_pairs(
        provider,
        candidates,
        contexts_by_id,
        texts_by_id,
        cache,
        parallelism=parallelism,
        sleep=lambda _: None,
    )

    generation = corpus.mock_generation_provider(leak_rate=leak_rate)
    all_texts = list(corpus.texts)
    rejected = 0
    for context in corpus.contexts:
        implicit = generate_implicit(
            generation,
            GenerationSpec(
                topic_id=context.id,
                count=implicit_per_topic,
                style_directive="personal experiences, complaints, everyday observations",
                polarity=Polarity.IMPLICIT_POSITIVE,
            ),
            corpus.blocklists[context.id],
            max_rejections=implicit_per_topic * 5,
        )
        hard = generate_hard_negatives(
            generation,
            GenerationSpec(
                topic_id=context.id,
                count=hard_negatives_per_topic,
                style_directive="superficially related texts about other topics",
                polarity=Polarity.HARD_NEGATIVE,
            ),
        )
        all_texts.extend(implicit.samples)
        all_texts.extend(hard.samples)
        labeled.extend(implicit.pairs)
        labeled.extend(hard.pairs)
        rejected += implicit.rejected

    return ToyDataset(
        corpus=corpus, texts=all_texts, pairs=labeled, rejected_generations=rejected
    )
