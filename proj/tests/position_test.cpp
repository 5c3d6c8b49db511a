#include "loopy/errors.hpp"
#include "loopy/position.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace loopy;

TEST(PositionAlgebra, CollateralDebtRoundTrip) {
    const ExposureLeverage el = to_exposure_leverage({50.0, 40.0});
    EXPECT_DOUBLE_EQ(el.exposure, 10.0);
    EXPECT_DOUBLE_EQ(el.leverage, 5.0);
    const CollateralDebt back = to_collateral_debt(el);
    EXPECT_DOUBLE_EQ(back.collateral, 50.0);
    EXPECT_DOUBLE_EQ(back.debt, 40.0);
}

TEST(PositionAlgebra, UnleveragedPosition) {
    const ExposureLeverage el = to_exposure_leverage({7.0, 0.0});
    EXPECT_EQ(el.leverage, 1.0);
    const SplitPosition sp = split(el, 4.0);
    EXPECT_EQ(sp.unleveraged, 7.0);
    EXPECT_EQ(sp.max_leveraged, 0.0);
}

TEST(PositionAlgebra, InsolventRejected) {
    EXPECT_THROW(to_exposure_leverage({10.0, 10.0}), InsolventPositionError);
    EXPECT_THROW(to_exposure_leverage({10.0, 12.0}), InsolventPositionError);
    EXPECT_THROW(to_exposure_leverage({10.0, -1.0}), DomainError);
    EXPECT_THROW(to_collateral_debt({-1.0, 2.0}), DomainError);
    EXPECT_THROW(to_collateral_debt({1.0, 0.5}), DomainError);
}

TEST(PositionAlgebra, SplitAtCap) {
    const SplitPosition sp = split({12.0, 3.0}, 5.0);
    EXPECT_DOUBLE_EQ(sp.unleveraged, 6.0);
    EXPECT_DOUBLE_EQ(sp.max_leveraged, 6.0);
    // Collateral and debt are preserved by the split.
    EXPECT_DOUBLE_EQ(sp.unleveraged + sp.max_leveraged * sp.l_max, 36.0);
    EXPECT_DOUBLE_EQ(sp.max_leveraged * (sp.l_max - 1.0), 24.0);

    const SplitPosition full = split({4.0, 5.0}, 5.0);
    EXPECT_EQ(full.unleveraged, 0.0);
    EXPECT_EQ(full.max_leveraged, 4.0);
}

TEST(PositionAlgebra, SplitRejectsLeverageAboveCap) {
    EXPECT_THROW(split({1.0, 5.5}, 5.0), ConstraintError);
    EXPECT_THROW(split({1.0, 2.0}, 1.0), DomainError);
    EXPECT_THROW(unsplit({0.0, 0.0, 5.0}), DomainError);
}

TEST(PositionAlgebra, RandomRoundTrips) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> exposure(1e-3, 1e6);
    std::uniform_real_distribution<double> cap(1.5, 20.0);
    for (int trial = 0; trial < 10'000; ++trial) {
        const double l_max = cap(rng);
        const double l = std::uniform_real_distribution<double>(1.0, l_max)(rng);
        const ExposureLeverage el{exposure(rng), l};
        const ExposureLeverage via_cd = to_exposure_leverage(to_collateral_debt(el));
        EXPECT_NEAR(via_cd.exposure, el.exposure, 1e-12 * el.exposure);
        EXPECT_NEAR(via_cd.leverage, el.leverage, 1e-12 * el.leverage);
        const ExposureLeverage via_split = unsplit(split(el, l_max));
        EXPECT_NEAR(via_split.exposure, el.exposure, 1e-12 * el.exposure);
        EXPECT_NEAR(via_split.leverage, el.leverage, 1e-12 * el.leverage);
    }
}

TEST(PositionAlgebra, CashFlowsAgree) {
    const MarketState mk("A", 1000.0, 300.0, 0.945, KinkedIrm{0.0, 0.04, 0.6, 0.9});
    for (double l : {1.0, 1.5, 3.0, 5.0}) {
        const ExposureLeverage el{80.0, l};
        const double direct = direct_cash_flow(mk, el, 0.03);
        const double via_split = split_cash_flow(mk, split(el, 5.0), 0.03);
        EXPECT_NEAR(direct, via_split, 1e-10 * 80.0);
    }
    // Unleveraged position earns the staking rate and pays nothing.
    EXPECT_DOUBLE_EQ(direct_cash_flow(mk, {80.0, 1.0}, 0.03), 2.4);
}

TEST(Collateralization, StrictInequality) {
    EXPECT_NO_THROW(check_collateralization({100.0, 94.0}, 0.945));
    EXPECT_THROW(check_collateralization({100.0, 94.5}, 0.945), ConstraintError);
    EXPECT_THROW(check_collateralization({100.0, 94.0}, 0.945, 0.01), ConstraintError);
    EXPECT_THROW(check_collateralization({100.0, 1.0}, 0.945, 0.95), DomainError);
}

TEST(Collateralization, LeverageBound) {
    EXPECT_NEAR(max_leverage_bound(0.945), 1.0 / 0.055, 1e-12);
    EXPECT_NO_THROW(check_leverage({1.0, 18.0}, 0.945));
    EXPECT_THROW(check_leverage({1.0, 18.5}, 0.945), ConstraintError);
    EXPECT_THROW(check_leverage({1.0, 10.5}, 0.945, 0.045), ConstraintError);
    EXPECT_THROW(max_leverage_bound(1.0), DomainError);
}
