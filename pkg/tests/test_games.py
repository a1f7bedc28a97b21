from unittest import TestCase

import numpy as np

from spsro.exceptions import InvalidArgumentError, InvalidPolicyError
from spsro.games import (
    KuhnDescriptor,
    KuhnPoker,
    NFGDescriptor,
    NormalFormGame,
    PureAction,
    TabularPolicy,
    aggregate_policies,
    best_response,
    expected_value,
    game_from_descriptor,
    generate_nfg,
    mix_policies,
)

RPS = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])


def rps() -> NormalFormGame:
    return NormalFormGame(rows=3, cols=3, payoff=RPS, seed=0)


def kuhn_equilibrium(game: KuhnPoker):
    """
    The equilibrium with player 1 never bluffing. Player 1's value is -1/18.
    """
    third = 1.0 / 3.0
    policy_1 = TabularPolicy(
        player=0,
        table={
            "J": (1.0, 0.0),
            "Q": (1.0, 0.0),
            "K": (1.0, 0.0),
            "Jpb": (1.0, 0.0),
            "Qpb": (1.0 - third, third),
            "Kpb": (0.0, 1.0),
        },
    )
    policy_2 = TabularPolicy(
        player=1,
        table={
            "Jp": (1.0 - third, third),
            "Qp": (1.0, 0.0),
            "Kp": (0.0, 1.0),
            "Jb": (1.0, 0.0),
            "Qb": (1.0 - third, third),
            "Kb": (0.0, 1.0),
        },
    )
    return policy_1, policy_2


class TestGenerateNFG(TestCase):
    def test_deterministic(self):
        a = generate_nfg(4, 5, seed=123)
        b = generate_nfg(4, 5, seed=123)
        self.assertTrue(np.array_equal(a.payoff, b.payoff))
        self.assertEqual(a.payoff.shape, (4, 5))

    def test_seed_changes_game(self):
        a = generate_nfg(4, 4, seed=1)
        b = generate_nfg(4, 4, seed=2)
        self.assertFalse(np.array_equal(a.payoff, b.payoff))

    def test_payoff_range(self):
        game = generate_nfg(30, 30, seed=7)
        self.assertTrue(np.all(np.abs(game.payoff) <= 1.0))

    def test_read_only(self):
        game = generate_nfg(2, 2, seed=0)
        with self.assertRaises(ValueError):
            game.payoff[0, 0] = 0.5

    def test_invalid(self):
        with self.assertRaises(InvalidArgumentError):
            generate_nfg(0, 3, seed=0)
        with self.assertRaises(InvalidArgumentError):
            generate_nfg(3, 3, seed=-1)

    def test_payoff_out_of_range(self):
        with self.assertRaises(InvalidArgumentError):
            NormalFormGame(
                rows=1, cols=1, payoff=np.array([[2.0]]), seed=0
            )


class TestExpectedValue(TestCase):
    def test_pure(self):
        game = rps()
        # Action 1 beats action 0.
        self.assertEqual(
            expected_value(game, PureAction(1), PureAction(0)), (1.0, -1.0)
        )

    def test_bilinear(self):
        game = generate_nfg(5, 4, seed=3)
        generator = np.random.default_rng(0)
        x_1, x_2 = generator.dirichlet(np.ones(5), size=2)
        y = generator.dirichlet(np.ones(4))
        mixed = 0.3 * x_1 + 0.7 * x_2
        value, _ = expected_value(game, mixed / mixed.sum(), y)
        expected = (
            0.3 * expected_value(game, x_1, y)[0]
            + 0.7 * expected_value(game, x_2, y)[0]
        )
        self.assertAlmostEqual(value, expected, places=12)

    def test_bad_action(self):
        with self.assertRaises(InvalidPolicyError):
            expected_value(rps(), PureAction(3), PureAction(0))

    def test_kuhn_uniform(self):
        """
        Working through the tree by hand, a deal where player 1 holds the
        higher card is worth 1 + 1/8, and a lower card -1 + 1/8.
        """
        game = KuhnPoker()
        value_1, value_2 = expected_value(
            game,
            TabularPolicy.uniform(game, 0),
            TabularPolicy.uniform(game, 1),
        )
        self.assertAlmostEqual(value_1, 0.125, places=12)
        self.assertAlmostEqual(value_2, -0.125, places=12)

    def test_kuhn_equilibrium_value(self):
        game = KuhnPoker()
        value, _ = expected_value(game, *kuhn_equilibrium(game))
        self.assertAlmostEqual(value, -1.0 / 18.0, places=12)

    def test_missing_information_state(self):
        game = KuhnPoker()
        partial = TabularPolicy(player=0, table={"J": (1.0, 0.0)})
        with self.assertRaises(InvalidPolicyError):
            expected_value(game, partial, TabularPolicy.uniform(game, 1))


class TestTabularPolicy(TestCase):
    def test_not_on_simplex(self):
        with self.assertRaises(InvalidPolicyError):
            TabularPolicy(player=0, table={"J": (0.7, 0.7)})

    def test_random_is_valid(self):
        game = KuhnPoker()
        policy = TabularPolicy.random(game, 1, np.random.default_rng(0))
        self.assertEqual(set(policy.table), set(game.info_states(1)))
        for probs in policy.table.values():
            self.assertAlmostEqual(sum(probs), 1.0, places=12)


class TestMixPolicies(TestCase):
    def setUp(self):
        self.game = KuhnPoker()
        self.check = TabularPolicy.deterministic(self.game, 0, {})
        self.bet = TabularPolicy.deterministic(
            self.game, 0, {key: 1 for key in self.game.info_states(0)}
        )

    def test_endpoints(self):
        self.assertIs(mix_policies(self.check, self.bet, 1.0), self.check)
        self.assertIs(mix_policies(self.check, self.bet, 0.0), self.bet)

    def test_mix(self):
        mixed = mix_policies(self.check, self.bet, 0.25)
        for probs in mixed.table.values():
            self.assertAlmostEqual(probs[0], 0.25)
            self.assertAlmostEqual(probs[1], 0.75)

    def test_invalid_beta(self):
        with self.assertRaises(InvalidArgumentError):
            mix_policies(self.check, self.bet, 1.5)

    def test_different_players(self):
        with self.assertRaises(InvalidArgumentError):
            mix_policies(
                self.check, TabularPolicy.uniform(self.game, 1), 0.5
            )


class TestAggregatePolicies(TestCase):
    def test_nfg(self):
        game = rps()
        output = aggregate_policies(
            game,
            [PureAction(0), PureAction(2), PureAction(0)],
            np.array([0.25, 0.5, 0.25]),
            player=0,
        )
        self.assertTrue(np.allclose(output, [0.5, 0.0, 0.5]))

    def test_kuhn_realisation_equivalent(self):
        """
        The aggregate plays exactly like the mixture against any opponent.
        """
        game = KuhnPoker()
        generator = np.random.default_rng(5)
        policies = [TabularPolicy.random(game, 0, generator) for _ in range(3)]
        weights = np.array([0.2, 0.5, 0.3])
        aggregate = aggregate_policies(game, policies, weights, player=0)

        for _ in range(3):
            opponent = TabularPolicy.random(game, 1, generator)
            mixture_value = sum(
                w * expected_value(game, p, opponent)[0]
                for p, w in zip(policies, weights)
            )
            self.assertAlmostEqual(
                expected_value(game, aggregate, opponent)[0],
                mixture_value,
                places=12,
            )

    def test_weight_count(self):
        with self.assertRaises(InvalidArgumentError):
            aggregate_policies(rps(), [PureAction(0)], np.ones(2), 0)


class TestBestResponse(TestCase):
    def test_against_equilibrium(self):
        game = KuhnPoker()
        policy_1, policy_2 = kuhn_equilibrium(game)
        _, value_1 = best_response(game, policy_2, player=0)
        _, value_2 = best_response(game, policy_1, player=1)
        self.assertAlmostEqual(value_1, -1.0 / 18.0, places=12)
        self.assertAlmostEqual(value_2, 1.0 / 18.0, places=12)

    def test_value_matches_policy(self):
        game = KuhnPoker()
        opponent = TabularPolicy.random(game, 1, np.random.default_rng(2))
        policy, value = best_response(game, opponent, player=0)
        self.assertAlmostEqual(
            expected_value(game, policy, opponent)[0], value, places=12
        )

    def test_beats_always_fold(self):
        """
        Against an opponent who never bets or calls, betting wins the ante
        every hand.
        """
        game = KuhnPoker()
        passive = TabularPolicy.deterministic(game, 1, {})
        policy, value = best_response(game, passive, player=0)
        self.assertAlmostEqual(value, 1.0)
        # With the king, checking also wins the ante, and ties go to
        # the lowest action.
        for card in ("J", "Q"):
            self.assertEqual(policy.probs(card), (0.0, 1.0))

    def test_same_player(self):
        game = KuhnPoker()
        with self.assertRaises(InvalidArgumentError):
            best_response(game, TabularPolicy.uniform(game, 0), player=0)


class TestDescriptors(TestCase):
    def test_nfg(self):
        game = generate_nfg(3, 4, seed=9)
        descriptor = game.descriptor()
        self.assertEqual(descriptor, NFGDescriptor(rows=3, cols=4, seed=9))
        rebuilt = game_from_descriptor(descriptor)
        self.assertTrue(np.array_equal(rebuilt.payoff, game.payoff))

    def test_kuhn(self):
        self.assertIsInstance(
            game_from_descriptor(KuhnDescriptor()), KuhnPoker
        )
