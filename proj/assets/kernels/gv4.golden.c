void test(Adyn, p, At_p) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, true, false);
    config_ld(12 * sizeof(float), 0);
    config_ld(1 * sizeof(float), 1);
    config_st(1 * sizeof(float));

    static uint32_t Adyn_sp_addr = 0;
    static uint32_t p_sp_addr = 36;
    static uint32_t At_p_acc_addr = 1 << 31;

    // Adyn as 4x4 tiles, tile (ib, kb) at row (ib * 3 + kb) * 4
    for (int ib = 0; ib < 3; ib++) {
        for (int kb = 0; kb < 3; kb++) {
            mvin(Adyn + kb * 48 + ib * 4, Adyn_sp_addr + (ib * 3 + kb) * 4, 4, 4);
        }
    }
    for (int kb = 0; kb < 3; kb++) {
        for (int jb = 0; jb < 1; jb++) {
            mvin2(p + kb * 4 + jb * 4, p_sp_addr + (kb * 1 + jb) * 4, 1, 4);
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        for (int jb = 0; jb < 1; jb++) {
            for (int kb = 0; kb < 3; kb++) {
                uint32_t c_addr = At_p_acc_addr + (ib * 1 + jb) * 4;
                if (kb > 0) c_addr |= 1 << 30;
                preload(p_sp_addr + (kb * 1 + jb) * 4, c_addr, 1, 4, 1, 4);
                compute_preloaded(Adyn_sp_addr + (ib * 3 + kb) * 4, 0xffffffff, 4, 4, 1, 4);
            }
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        mvout(At_p + ib * 4, At_p_acc_addr + ib * 4, 1, 4);
    }
    fence();
}
