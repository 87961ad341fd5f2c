import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from intentpool.core.embed import EmbedderConfig, EmbeddingMatrix, embed_texts
from intentpool.core.errors import UnknownIntentError, ValidationError
from intentpool.core.hac import build_dendrogram, cut_labels
from intentpool.envs import BargainGame, GameConfig, GuessGame, IntentTemplateBank, NegotiationGame

GREETINGS = {
    "greet": ["Hello there.", "Hi, nice to meet you."],
    "offer": ["I propose {price}.", "Would you accept {price}?"],
}


def test_bank_validation():
    with pytest.raises(ValidationError, match="at least 2"):
        IntentTemplateBank({"greet": ["Hello."]})
    with pytest.raises(ValidationError, match="appears under"):
        IntentTemplateBank({"a": ["Hello.", "Hi."], "b": ["Hello.", "Hey."]})
    with pytest.raises(ValidationError, match="uppercase"):
        IntentTemplateBank({"a": ["hello.", "Hi."]})
    with pytest.raises(ValidationError, match="synonym"):
        IntentTemplateBank({"a": ["I suggest a deal.", "Hi."]})
    with pytest.raises(ValidationError):
        IntentTemplateBank(GREETINGS, noise=1.5)


def test_render_and_resolve_with_noise():
    bank = IntentTemplateBank(GREETINGS, noise=1.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        text = bank.render("offer", rng, price="$40")
        assert bank.resolve(text) == ("offer", {"price": "$40"})
        assert bank.intent_of(bank.render("greet", rng)) == "greet"


def test_noise_changes_the_surface():
    bank = IntentTemplateBank(GREETINGS, noise=1.0)
    rng = np.random.default_rng(1)
    texts = {bank.render("offer", rng, price="$1") for _ in range(40)}
    assert texts - {"I propose $1.", "Would you accept $1?"}
    assert all(bank.canonicalize(t) in {"I propose $1.", "Would you accept $1?"} for t in texts)


def test_unknown_intent_and_utterance():
    bank = IntentTemplateBank(GREETINGS)
    with pytest.raises(UnknownIntentError):
        bank.render("farewell", np.random.default_rng(0))
    with pytest.raises(UnknownIntentError):
        bank.resolve("Goodbye forever.")


def test_rendering_is_seeded():
    bank = IntentTemplateBank(GREETINGS, noise=0.5)
    first = [bank.render("offer", np.random.default_rng(3), price="$9") for _ in range(3)]
    assert len(set(first)) == 1


@pytest.mark.parametrize(
    "game",
    [GuessGame(seed=0, n_items=100, domain="cities"), GuessGame(seed=0), BargainGame(seed=0), NegotiationGame(seed=0)],
    ids=["cities", "objects", "bargain", "negotiate"],
)
def test_shipped_banks_are_disjoint_and_paraphrased(game):
    bank = game.bank
    owners = {}
    for intent, templates in bank.templates.items():
        assert len(templates) >= 4
        for template in templates:
            assert owners.setdefault(template, intent) == intent
    rng = np.random.default_rng(0)
    for intent in game.action_intents():
        slots = {"item": game.items[0]} if intent == "guess" else {}
        assert bank.intent_of(bank.render(intent, rng, **slots)) == intent


@pytest.mark.parametrize("game_id", ["guess-16", "bargain-3", "negotiate-1", "negotiate-3"])
def test_clustering_noisy_renders_recovers_the_intents(game_id):
    game = GameConfig.load(game_id).make_game(0)
    bank = game.bank
    rng = np.random.default_rng(0)
    texts, truth = [], []
    for label, intent in enumerate(bank.intents):
        for _ in range(6):
            item = game.items[int(rng.integers(len(game.items)))] if intent == "guess" else None
            texts.append(bank.render(intent, rng, item=item))
            truth.append(label)
    m = EmbeddingMatrix(embed_texts(EmbedderConfig(), texts), tuple(range(len(texts))))
    labels = cut_labels(build_dendrogram(m), len(bank.intents))
    assert adjusted_rand_score(truth, labels) >= 0.9
