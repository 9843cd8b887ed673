void test(BPA, Kt, Q, APBK_Q) {
    config_ex(WEIGHT_STATIONARY, NO_ACTIVATION, true, false);
    config_ld(12 * sizeof(float), 0);
    config_ld(12 * sizeof(float), 1);
    config_ld(12 * sizeof(float), 2);
    config_st(12 * sizeof(float));

    static uint32_t BPA_sp_addr = 0;
    static uint32_t Kt_sp_addr = 12;
    static uint32_t Q_sp_addr = 24;
    static uint32_t APBK_Q_acc_addr = 1 << 31;

    // BPA as 4x4 tiles, tile (ib, kb) at row (ib * 1 + kb) * 4
    for (int ib = 0; ib < 3; ib++) {
        for (int kb = 0; kb < 1; kb++) {
            mvin(BPA + kb * 48 + ib * <CONST>, BPA_sp_addr + (ib * 1 + kb) * 4, 4, 4);
        }
    }
    for (int kb = 0; kb < 1; kb++) {
        for (int jb = 0; jb < 3; jb++) {
            mvin2(Kt + kb * 48 + jb * 4, Kt_sp_addr + (kb * 3 + jb) * 4, 4, 4);
        }
    }
    for (int ib = 0; ib < 3; ib++) {
        for (int jb = 0; jb < 3; jb++) {
            mvin3(Q + ib * 48 + jb * 4, Q_sp_addr + (ib * 3 + jb) * 4, 4, 4);
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        for (int jb = 0; jb < 3; jb++) {
            for (int kb = 0; kb < 1; kb++) {
                uint32_t c_addr = APBK_Q_acc_addr + (ib * 3 + jb) * 4;
                if (kb > 0) c_addr |= 1 << 30;
                preload(Kt_sp_addr + (kb * 3 + jb) * 4, c_addr, 4, 4, 4, 4);
                compute_preloaded(BPA_sp_addr + (ib * 1 + kb) * 4, kb == 0 ? Q_sp_addr + (ib * 3 + jb) * 4 : 0xffffffff, 4, 4, 4, 4);
            }
        }
    }

    for (int ib = 0; ib < 3; ib++) {
        mvout(APBK_Q + ib * 48, APBK_Q_acc_addr + ib * 12, 12, 4);
    }
    fence();
}
