void test(Bdyn, KinfT, Adyn, BK_A) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, false, true);
    config_ld(4 * sizeof(float), 0);
    config_ld(4 * sizeof(float), 1);
    config_ld(12 * sizeof(float), 2);
    config_st(12 * sizeof(float));

    static uint32_t Bdyn_sp_addr = 0;
    static uint32_t KinfT_sp_addr = 12;
    static uint32_t Adyn_sp_addr = 24;
    static uint32_t BK_A_acc_addr = 1 << 31;

    // Bdyn as 4x4 tiles, tile (ib, kb) at row (ib * 1 + kb) * 4
    for (int ib = 0; ib < 3; ib++) {
        for (int kb = 0; kb < 1; kb++) {
            mvin(Bdyn + ib * 16 + kb * 4, Bdyn_sp_addr + (ib * 1 + kb) * 4, 4, 4);
        }
    }
    for (int kb = 0; kb < 1; kb++) {
        for (int jb = 0; jb < 3; jb++) {
            mvin2(KinfT + jb * 16 + kb * 4, KinfT_sp_addr + (kb * 3 + jb) * 4, 4, 4);
        }
    }
    for (int ib = 0; ib < 3; ib++) {
        for (int jb = 0; jb < 3; jb++) {
            mvin3(Adyn + ib * 48 + jb * 4, Adyn_sp_addr + (ib * 3 + jb) * 4, 4, 4);
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        for (int jb = 0; jb < 3; jb++) {
            for (int kb = 0; kb < 1; kb++) {
                uint32_t c_addr = BK_A_acc_addr + (ib * 3 + jb) * 4;
                if (kb > 0) c_addr |= 1 << 30;
                preload(KinfT_sp_addr + (kb * 3 + jb) * 4, c_addr, 4, 4, 4, 4);
                compute_preloaded(Bdyn_sp_addr + (ib * 1 + kb) * 4, kb == 0 ? Adyn_sp_addr + (ib * 3 + jb) * 4 : 0xffffffff, 4, 4, 4, 4);
            }
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        mvout(BK_A + ib * 48, BK_A_acc_addr + ib * 12, 12, 4);
    }
    fence();
}
