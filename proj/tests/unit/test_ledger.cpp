#include "fixtures.hpp"

#include <aspen/consensus.hpp>
#include <aspen/random.hpp>

#include <doctest.h>

#include <algorithm>

using namespace aspen;
using fixture::Spend;
using fixture::wallet;

namespace {

// Channel states of a genesis block and a context for the epoch it opens,
// led by a key the test controls.
struct EpochFixture {
    ChainParams params;
    LedgerState genesis;
    KeyPair leader = keypair_from_seed(42);
    std::set<ServiceNumber> active;
    std::map<Hash, KeyBlockRecord> blocks;
    std::set<Hash> revoked;
    ChainContext ctx;

    explicit EpochFixture(ChainParams p) : params(std::move(p))
    {
        genesis = genesis_state(make_genesis(params), params, Tracking::full());
        active = genesis.governance.active_channels();
        blocks = genesis.chain_blocks;
        ctx.params = &params;
        ctx.epoch_hash = genesis.block;
        ctx.epoch_height = 0;
        ctx.leader = leader.pub;
        ctx.active_channels = &active;
        ctx.chain_blocks = &blocks;
        ctx.revoked = &revoked;
    }

    ChannelState state(uint32_t c) const { return genesis.channels.at(ServiceNumber{c}); }
    const ProtocolDescriptor &proto(uint32_t c) const { return genesis.governance.active(ServiceNumber{c}); }
    OutPoint coin(uint32_t i) const { return fixture::genesis_coin(params, i); }

    MicroBlock micro(const ChannelState &st, std::vector<Transaction> txs, TimeUs ts) const
    {
        MicroBlock mb;
        mb.header.channel = st.channel;
        mb.header.epoch = ctx.epoch_hash;
        mb.header.prev = st.tip;
        mb.header.timestamp_us = ts;
        mb.header.leader = leader.pub;
        mb.txs = std::move(txs);
        mb.header.tx_root = microblock_tx_root(mb.txs);
        sign_header(mb, leader.secret);
        return mb;
    }
};

Output out(Amount v, uint64_t owner, uint32_t channel) { return {v, wallet(owner).pub, ServiceNumber{channel}}; }

}  // namespace

TEST_CASE("validate_tx: in-channel payment")
{
    EpochFixture f(fixture::params_with({3}, {{0, 2}}));
    const auto tx = fixture::payment({{f.coin(0), wallet(0)}}, {out(990, 1, 0)}, 10);
    CHECK(validate_tx(tx, f.state(0), f.proto(0), f.ctx).ok());

    SUBCASE("unbalanced")
    {
        const auto bad = fixture::payment({{f.coin(0), wallet(0)}}, {out(991, 1, 0)}, 10);
        CHECK(validate_tx(bad, f.state(0), f.proto(0), f.ctx).code == LedgerErrc::kBadBalance);
    }
    SUBCASE("signed by someone else")
    {
        const auto bad = fixture::payment({{f.coin(0), wallet(1)}}, {out(990, 1, 0)}, 10);
        CHECK(validate_tx(bad, f.state(0), f.proto(0), f.ctx).code == LedgerErrc::kBadSignature);
    }
    SUBCASE("unknown input")
    {
        const auto bad = fixture::payment({{OutPoint{f.coin(0).tx_hash, 9}, wallet(0)}}, {out(990, 1, 0)}, 10);
        CHECK(validate_tx(bad, f.state(0), f.proto(0), f.ctx).code == LedgerErrc::kUnknownInput);
    }
    SUBCASE("same outpoint twice in one transaction")
    {
        const auto bad =
            fixture::payment({{f.coin(0), wallet(0)}, {f.coin(0), wallet(0)}}, {out(1990, 1, 0)}, 10);
        CHECK(validate_tx(bad, f.state(0), f.proto(0), f.ctx).code == LedgerErrc::kDoubleSpend);
    }
    SUBCASE("oversize")
    {
        auto proto = f.proto(0);
        proto.max_tx_bytes = static_cast<uint32_t>(encode_to_bytes(tx).size()) - 1;
        CHECK(validate_tx(tx, f.state(0), proto, f.ctx).code == LedgerErrc::kOverSize);
        proto.max_tx_bytes += 1;
        CHECK(validate_tx(tx, f.state(0), proto, f.ctx).ok());
    }
    SUBCASE("output locked to another channel")
    {
        const auto bad = fixture::payment({{f.coin(0), wallet(0)}}, {out(990, 1, 3)}, 10);
        CHECK(validate_tx(bad, f.state(0), f.proto(0), f.ctx).code == LedgerErrc::kWrongChannel);
    }
}

TEST_CASE("validate_tx: service transactions stay in their channel")
{
    EpochFixture f(fixture::params_with({3, 5}, {{3, 1}}));
    const auto tx = fixture::service(ServiceNumber{3}, {{f.coin(0), wallet(0)}}, {out(999, 0, 3)}, 1);
    CHECK(validate_tx(tx, f.state(3), f.proto(3), f.ctx).ok());
    CHECK(validate_tx(tx, f.state(5), f.proto(5), f.ctx).code == LedgerErrc::kWrongChannel);
    // A channel-3 coin is unknown to the payment channel.
    const auto pay = fixture::payment({{f.coin(0), wallet(0)}}, {out(999, 0, 0)}, 1);
    CHECK(validate_tx(pay, f.state(0), f.proto(0), f.ctx).code == LedgerErrc::kUnknownInput);
    // Registrations and pores are confined to channels 1 and 0.
    FundingPoreTx p;
    CHECK(validate_tx(Transaction{p}, f.state(3), f.proto(3), f.ctx).code == LedgerErrc::kWrongChannel);
    RegistrationTx r;
    CHECK(validate_tx(Transaction{r}, f.state(0), f.proto(0), f.ctx).code == LedgerErrc::kWrongChannel);
    CHECK(validate_tx(Transaction{CoinbaseTx{}}, f.state(0), f.proto(0), f.ctx).code == LedgerErrc::kMalformed);
}

TEST_CASE("validate_funding_pore")
{
    auto params = fixture::params_with({3}, {{0, 1}}, 50);
    params.min_pore_fee = 5;
    EpochFixture f(params);
    const auto st = f.state(0);

    const auto ok = fixture::pore({{f.coin(0), wallet(0)}}, {out(30, 0, 3), out(15, 0, 0)}, 5);
    CHECK(validate_funding_pore(ok, st, f.active, f.params, f.proto(0), f.ctx).ok());
    CHECK(validate_tx(ok, st, f.proto(0), f.ctx).ok());

    const auto unknown = fixture::pore({{f.coin(0), wallet(0)}}, {out(30, 0, 9), out(15, 0, 0)}, 5);
    CHECK(validate_funding_pore(unknown, st, f.active, f.params, f.proto(0), f.ctx).code ==
          LedgerErrc::kUnknownChannel);

    const auto cheap = fixture::pore({{f.coin(0), wallet(0)}}, {out(30, 0, 3), out(16, 0, 0)}, 4);
    CHECK(validate_funding_pore(cheap, st, f.active, f.params, f.proto(0), f.ctx).code == LedgerErrc::kFeeTooLow);
}

TEST_CASE("apply_microblock")
{
    EpochFixture f(fixture::params_with({3}, {{0, 3}}));
    const auto st = f.state(0);
    EpochEffects effects;

    SUBCASE("empty microblock moves only the tip")
    {
        const auto mb = f.micro(st, {}, 1);
        const auto next = apply_microblock(mb, st, f.proto(0), f.ctx, effects);
        CHECK(next.utxo == st.utxo);
        CHECK(next.spent == st.spent);
        CHECK(next.tip == block_hash(mb));
        CHECK(effects.tx_count == 0);
    }
    SUBCASE("one payment")
    {
        const auto tx = fixture::payment({{f.coin(0), wallet(0)}}, {out(600, 1, 0), out(390, 0, 0)}, 10);
        const auto next = apply_microblock(f.micro(st, {tx}, 1), st, f.proto(0), f.ctx, effects);
        CHECK(next.utxo.size() == st.utxo.size() - 1 + 2);
        CHECK_FALSE(next.utxo.contains(f.coin(0)));
        CHECK(next.utxo.contains(OutPoint{tx_hash(tx), 1}));
        CHECK(next.spent.contains(f.coin(0)));
        CHECK(next.total_value() == st.total_value() - 10);
        CHECK(effects.fees == 10);
    }
    SUBCASE("a later double spend rejects the whole microblock")
    {
        const auto t1 = fixture::payment({{f.coin(0), wallet(0)}}, {out(990, 1, 0)}, 10);
        const auto t2 = fixture::payment({{f.coin(1), wallet(1)}}, {out(990, 2, 0)}, 10);
        const auto t3 = fixture::payment({{f.coin(0), wallet(0)}}, {out(980, 2, 0)}, 20);
        auto copy = st;
        const auto before = encode_to_bytes(copy);
        const auto mb = f.micro(st, {t1, t2, t3}, 1);
        try {
            apply_microblock_in_place(mb, copy, f.proto(0), f.ctx, effects);
            FAIL("accepted a double spend");
        } catch (const LedgerError &e) {
            CHECK(e.code() == LedgerErrc::kDoubleSpend);
        }
        CHECK(encode_to_bytes(copy) == before);
        CHECK(effects.tx_count == 0);
    }
    SUBCASE("stale tip, wrong leader, early timestamp")
    {
        auto mb = f.micro(st, {}, 1);
        auto moved = st;
        moved.tip = sha256(Bytes{1});
        CHECK_THROWS_AS(apply_microblock(mb, moved, f.proto(0), f.ctx, effects), LedgerError);

        auto other = f;
        other.ctx.leader = wallet(0).pub;
        CHECK_THROWS_AS(apply_microblock(mb, st, f.proto(0), other.ctx, effects), LedgerError);

        const auto first = apply_microblock(mb, st, f.proto(0), f.ctx, effects);
        const auto early = f.micro(first, {}, 1 + f.proto(0).microblock_interval_us - 1);
        CHECK_THROWS_AS(apply_microblock(early, first, f.proto(0), f.ctx, effects), LedgerError);
        const auto on_time = f.micro(first, {}, 1 + f.proto(0).microblock_interval_us);
        CHECK_NOTHROW(apply_microblock(on_time, first, f.proto(0), f.ctx, effects));
    }
    SUBCASE("pore outputs for other channels leave the payment state")
    {
        const auto tx = fixture::pore({{f.coin(0), wallet(0)}}, {out(500, 0, 3), out(490, 0, 0)}, 10);
        const auto next = apply_microblock(f.micro(st, {tx}, 1), st, f.proto(0), f.ctx, effects);
        CHECK(next.utxo.contains(OutPoint{tx_hash(tx), 1}));
        CHECK_FALSE(next.utxo.contains(OutPoint{tx_hash(tx), 0}));
        REQUIRE(effects.pore_outputs.size() == 1);
        CHECK(effects.pore_outputs[0].outpoint == OutPoint{tx_hash(tx), 0});
    }
}

TEST_CASE("inflow commitments and crediting")
{
    EpochFixture f(fixture::params_with({3, 4}, {{0, 1}}));
    CHECK(build_inflow_commitment({}).empty());

    const OutPoint a{sha256(Bytes{7}), 0};
    const std::vector<PendingInflow> one{{a, out(30, 0, 3)}};
    const auto single = build_inflow_commitment(one);
    REQUIRE(single.size() == 1);
    CHECK(single.at(ServiceNumber{3}) == inflow_leaf_hash(a, one[0].output));

    std::vector<PendingInflow> seven;
    for (uint32_t i = 0; i < 7; ++i)
        seven.push_back({OutPoint{sha256(Bytes{static_cast<uint8_t>(i)}), i}, out(10 + i, i, i % 3 == 0 ? 4 : 3)});
    const auto roots = build_inflow_commitment(seven);
    REQUIRE(roots.size() == 2);
    for (uint32_t c : {3u, 4u}) {
        std::vector<Hash> leaves;
        for (const auto &p : seven)
            if (p.output.spend_channel.value == c)
                leaves.push_back(inflow_leaf_hash(p.outpoint, p.output));
        CHECK(roots.at(ServiceNumber{c}) == fixture::reference_merkle_root(leaves, 0, leaves.size()));
    }

    const auto proofs = build_inflow_proofs(seven, ServiceNumber{3});
    CHECK(inflow_proofs_complete(proofs));
    const auto st = f.state(3);
    const auto credited = credit_inflows(st, proofs, roots.at(ServiceNumber{3}), 1);
    CHECK(credited.utxo.size() == st.utxo.size() + proofs.size());
    CHECK(credited.inflow_log.size() == proofs.size());

    try {
        (void)credit_inflows(st, proofs, roots.at(ServiceNumber{4}), 1);
        FAIL("wrong root accepted");
    } catch (const LedgerError &e) {
        CHECK(e.code() == LedgerErrc::kBadProof);
    }
    try {
        (void)credit_inflows(credited, proofs, roots.at(ServiceNumber{3}), 2);
        FAIL("replayed inflow accepted");
    } catch (const LedgerError &e) {
        CHECK(e.code() == LedgerErrc::kDuplicateInflow);
    }
    CHECK_THROWS_AS(credit_inflows(f.state(0), proofs, roots.at(ServiceNumber{3}), 1), LedgerError);
}

// Random spends over every outpoint ever created, including spent ones and
// ones locked elsewhere, applied microblock by microblock in channels 0 and
// 3 with pores crediting channel 3. An independent ledger of what was
// accepted must never show an outpoint consumed twice or outside its lock.
TEST_CASE("no sequence of accepted microblocks spends an outpoint twice")
{
    constexpr uint32_t kWallets = 6;
    auto params = fixture::params_with({3}, {{0, kWallets}, {3, kWallets}}, 100'000);
    EpochFixture f(params);
    Rng rng(2024);

    std::map<ServiceNumber, ChannelState> states{{ServiceNumber{0}, f.state(0)}, {ServiceNumber{3}, f.state(3)}};
    std::map<PublicKey, uint64_t> owner_of;
    for (uint64_t w = 0; w < kWallets; ++w)
        owner_of.emplace(wallet(w).pub, w);

    struct Known {
        Output output;
        uint64_t owner;
    };
    std::map<OutPoint, Known> created;  // every outpoint ever produced
    for (uint32_t i = 0; i < 2 * kWallets; ++i)
        created.emplace(f.coin(i), Known{params.genesis_allocation[i], i % kWallets});

    std::vector<OutPoint> pool;
    for (const auto &[op, _] : created)
        pool.push_back(op);
    std::set<OutPoint> oracle_spent;
    uint64_t attempts = 0, accepted_txs = 0, violations = 0;
    std::vector<PendingInflow> pending;

    while (attempts < 12'000) {
        const ServiceNumber c{rng.below(2) == 0 ? 0u : 3u};
        auto &st = states.at(c);
        std::vector<Transaction> txs;
        const size_t n = 1 + rng.below(3);
        for (size_t k = 0; k < n; ++k) {
            ++attempts;
            std::vector<Spend> spends;
            Amount in = 0;
            const size_t nin = 1 + rng.below(2);
            for (size_t j = 0; j < nin; ++j) {
                // Bias toward live coins of this channel so that many attempts succeed.
                OutPoint op;
                if (rng.below(3) != 0 && !st.utxo.empty()) {
                    auto it = st.utxo.begin();
                    std::advance(it, rng.below(st.utxo.size()));
                    op = it->first;
                } else {
                    op = pool[rng.below(pool.size())];
                }
                const auto &known = created.at(op);
                spends.push_back({op, wallet(known.owner)});
                in += known.output.value;
            }
            const Amount fee = c == kPaymentChannel ? 10 : 1;
            if (in <= fee + 2)
                continue;
            const Amount value = in - fee;
            const uint64_t to = rng.below(kWallets);
            Transaction tx;
            if (c == kPaymentChannel && rng.below(4) == 0)
                tx = fixture::pore(spends, {out(value / 2, to, 3), out(value - value / 2, to, 0)}, fee);
            else if (c == kPaymentChannel)
                tx = fixture::payment(spends, {out(value / 2, to, 0), out(value - value / 2, to, 0)}, fee);
            else
                tx = fixture::service(c, spends, {out(value / 2, to, 3), out(value - value / 2, to, 3)}, fee);
            txs.push_back(std::move(tx));
        }
        if (txs.empty())
            continue;
        auto record = [&](const Transaction &tx) {
            for (const auto &in : tx.inputs()) {
                const auto &known = created.at(in.prevout);
                if (!oracle_spent.insert(in.prevout).second || known.output.spend_channel != c)
                    ++violations;
            }
            const Hash id = tx_hash(tx);
            for (uint32_t i = 0; i < tx.outputs().size(); ++i)
                if (created.emplace(OutPoint{id, i}, Known{tx.outputs()[i], owner_of.at(tx.outputs()[i].owner)}).second)
                    pool.push_back({id, i});
            ++accepted_txs;
        };
        const TimeUs interval = f.proto(c.value).microblock_interval_us;
        EpochEffects effects;
        bool whole = true;
        try {
            apply_microblock_in_place(f.micro(st, txs, st.tip_time_us + interval), st, f.proto(c.value), f.ctx,
                                      effects);
        } catch (const LedgerError &) {
            whole = false;
        }
        if (whole) {
            for (const auto &tx : txs)
                record(tx);
        } else {
            // Retry each transaction alone.
            for (const auto &tx : txs) {
                try {
                    apply_microblock_in_place(f.micro(st, {tx}, st.tip_time_us + interval), st, f.proto(c.value),
                                              f.ctx, effects);
                } catch (const LedgerError &) {
                    continue;
                }
                record(tx);
            }
        }
        pending.insert(pending.end(), effects.pore_outputs.begin(), effects.pore_outputs.end());
        if (pending.size() >= 4) {
            const auto roots = build_inflow_commitment(pending);
            auto &dest = states.at(ServiceNumber{3});
            dest = credit_inflows(dest, build_inflow_proofs(pending, ServiceNumber{3}), roots.at(ServiceNumber{3}),
                                  attempts);
            pending.clear();
        }
    }
    CHECK(attempts >= 10'000);
    CHECK(accepted_txs > 1000);
    CHECK(violations == 0);
    // Every tracked outpoint is either live in exactly its lock channel or spent.
    for (const auto &[op, known] : created) {
        const bool live0 = states.at(ServiceNumber{0}).utxo.contains(op);
        const bool live3 = states.at(ServiceNumber{3}).utxo.contains(op);
        CHECK_FALSE((live0 && live3));
        if (live0)
            CHECK(known.output.spend_channel == kPaymentChannel);
        if (live3)
            CHECK(known.output.spend_channel == ServiceNumber{3});
        if (oracle_spent.contains(op))
            CHECK_FALSE((live0 || live3));
    }
}
